use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use meshfree_rom::pipeline::{self, ArtifactStore, DomainPolicy, GridSpec, RunConfig, StageStatus, Surrogate};
use meshfree_rom::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "meshrom", version, about = "Meshfree POD-DNN reduced-order modelling")]
struct Cli {
    #[command(flatten)]
    run: RunArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration used when no file is given: desk, toy or full.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,

    /// Artifact directory.
    #[arg(long, short, global = true, env = "MESHROM_OUTPUT_DIR")]
    output: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for snapshot and dataset generation (1 for bitwise reproducibility checks).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true)]
    n_interior: Option<usize>,

    #[arg(long, global = true)]
    n_boundary: Option<usize>,

    #[arg(long, global = true)]
    n_loc: Option<usize>,

    #[arg(long, global = true)]
    n_snapshots: Option<usize>,

    #[arg(long, global = true)]
    eps_pod: Option<f64>,

    #[arg(long, global = true)]
    n_data: Option<usize>,

    #[arg(long, global = true)]
    epochs: Option<usize>,

    #[arg(long, global = true)]
    lr: Option<f64>,

    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the node set.
    Nodes,
    /// Solve the high-fidelity problem at the snapshot parameters.
    Snapshots,
    /// Compute the POD basis and the singular-value decay report.
    Pod,
    /// Label parameter samples with reduced coefficients.
    Dataset,
    /// Train the network.
    Train,
    /// Run every offline stage (resumable).
    Offline,
    /// Evaluate the surrogate for parameters read from a CSV file.
    Infer {
        #[arg(long)]
        params: PathBuf,
        /// Output CSV; defaults to `<output>/inference.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Warn instead of failing on parameters outside the training box.
        #[arg(long)]
        allow_outside: bool,
    },
    /// Compare RBF-FD, reduced least squares and POD-DNN on the test split.
    Benchmark {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a grid of architectures on the stored dataset.
    Grid {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 4, 6])]
        layers: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![20usize, 100, 500])]
        widths: Vec<usize>,
        #[arg(long = "grid-epochs", value_delimiter = ',', default_values_t = vec![1000usize])]
        grid_epochs: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![100usize])]
        batch: Vec<usize>,
        #[arg(long = "grid-lr", value_delimiter = ',', default_values_t = vec![1e-4])]
        grid_lr: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo checks of the network-calculus constructions.
    NetcalcVerify {
        #[arg(long, default_value_t = 500)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        verify_seed: u64,
    },
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::preset(&args.preset)?,
    };
    if let Some(dir) = &args.output {
        cfg.output_dir = dir.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
        cfg.train.seed = v;
    }
    if let Some(v) = args.n_interior {
        cfg.n_interior = v;
    }
    if let Some(v) = args.n_boundary {
        cfg.n_boundary = v;
    }
    if let Some(v) = args.n_loc {
        cfg.n_loc = v;
    }
    if let Some(v) = args.n_snapshots {
        cfg.n_snapshots = v;
    }
    if let Some(v) = args.eps_pod {
        cfg.eps_pod = v;
    }
    if let Some(v) = args.n_data {
        cfg.n_data = v;
    }
    if let Some(v) = args.epochs {
        cfg.train.n_epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.train.lr = v;
    }
    if cfg.output_dir.as_os_str().is_empty() {
        return Err(Error::Config("no output directory".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(args: &RunArgs) -> Result<PathBuf> {
    match &args.output {
        Some(dir) => Ok(dir.clone()),
        None => Ok(build_config(args)?.output_dir),
    }
}

fn run_stages(args: &RunArgs, last: &str) -> Result<()> {
    let cfg = build_config(args)?;
    let (_, report) = pipeline::run_through(&cfg, last)?;
    for (stage, status) in report {
        let word = if status == StageStatus::Ran { "done" } else { "up to date" };
        println!("{stage}: {word}");
    }
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}

fn csv_out(default_dir: &std::path::Path, name: &str, out: &Option<PathBuf>) -> Result<BufWriter<File>> {
    let path = out.clone().unwrap_or_else(|| default_dir.join(name));
    println!("writing {}", path.display());
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Nodes => run_stages(&cli.run, "nodes"),
        Command::Snapshots => run_stages(&cli.run, "snapshots"),
        Command::Pod => run_stages(&cli.run, "pod"),
        Command::Dataset => run_stages(&cli.run, "dataset"),
        Command::Train | Command::Offline => run_stages(&cli.run, "train"),
        Command::Infer { params, out, allow_outside } => {
            let store = ArtifactStore::open(&output_dir(&cli.run)?)?;
            let surrogate = Surrogate::load(&store)?;
            let text = std::fs::read_to_string(params)?;
            let mu = pipeline::online::read_params_csv(&text, surrogate.bounds.len())?;
            let policy = if *allow_outside { DomainPolicy::Warn } else { DomainPolicy::Reject };
            let result = surrogate.online(&mu, policy)?;
            println!("{} parameters in {:.3e} s", mu.nrows(), result.elapsed.as_secs_f64());
            pipeline::online::write_solutions_csv(&mu, &result.solutions, csv_out(store.dir(), "inference.csv", out)?)?;
            Ok(())
        }
        Command::Benchmark { out } => {
            let store = ArtifactStore::open(&output_dir(&cli.run)?)?;
            let report = pipeline::benchmark(&store)?;
            for r in &report.rows {
                println!("{:<11} mean error {:.3e}  time {:.4e} s", r.method, r.mean_rel_error, r.total_seconds);
            }
            println!("timing ordering pod_dnn < reduced_ls < rbf_fd: {}", report.ordering_holds);
            pipeline::online::write_benchmark_csv(&report, csv_out(store.dir(), "benchmark.csv", out)?)?;
            Ok(())
        }
        Command::Grid { layers, widths, grid_epochs, batch, grid_lr, out } => {
            let store = ArtifactStore::open(&output_dir(&cli.run)?)?;
            let grid = GridSpec {
                layers: layers.clone(),
                widths: widths.clone(),
                epochs: grid_epochs.clone(),
                batch_sizes: batch.clone(),
                lrs: grid_lr.clone(),
            };
            let rows = pipeline::grid_for_store(&store, &grid)?;
            for r in &rows {
                println!("L={} width={} epochs={} -> {:.3e} ({})", r.layers, r.width, r.n_epochs, r.test_error, r.status);
            }
            pipeline::online::write_grid_csv(&rows, csv_out(store.dir(), "grid.csv", out)?)?;
            Ok(())
        }
        Command::NetcalcVerify { draws, verify_seed } => {
            let dir = output_dir(&cli.run)?;
            let rows = pipeline::netcalc_verify(&dir, *draws, *verify_seed)?;
            let failed = rows.iter().filter(|r| !r.bound_satisfied).count();
            println!("{} checks, {failed} outside their bound; reports in {}", rows.len(), dir.display());
            if failed > 0 {
                return Err(Error::InvalidInput(format!("{failed} network constructions exceeded their error bound")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.run.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.run.threads {
        if let Err(e) = rayon_threads(n) {
            error!("{e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => {
            info!("finished");
            ExitCode::SUCCESS
        }
        Err(e) if e.is_config() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn rayon_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("--threads must be positive".into()));
    }
    pipeline::set_worker_threads(n)
}
