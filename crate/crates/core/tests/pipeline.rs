use meshfree_rom::pipeline::{self, ArtifactStore, DomainPolicy, RunConfig, StageStatus, Surrogate, STAGES};
use meshfree_rom::Error;
use nalgebra::DMatrix;

fn toy(dir: &std::path::Path) -> RunConfig {
    RunConfig { output_dir: dir.to_path_buf(), ..RunConfig::toy() }
}

#[test]
fn toy_run_resumes_and_reruns_on_change() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy(tmp.path());
    let (store, report) = pipeline::run_through(&cfg, "train").unwrap();
    assert_eq!(report.len(), STAGES.len());
    assert!(report.iter().all(|(_, s)| *s == StageStatus::Ran));
    let hashes = store.file_hashes();

    let (_, again) = pipeline::run_through(&cfg, "train").unwrap();
    assert!(again.iter().all(|(_, s)| *s == StageStatus::Skipped), "{again:?}");

    // A training-only change keeps the upstream stages.
    let mut changed = cfg.clone();
    changed.train.n_epochs += 1;
    let (store, report) = pipeline::run_through(&changed, "train").unwrap();
    let ran: Vec<&str> = report.iter().filter(|(_, s)| *s == StageStatus::Ran).map(|(n, _)| n.as_str()).collect();
    assert_eq!(ran, ["train"]);
    let after = store.file_hashes();
    assert_eq!(after["pod_basis.pdnn"], hashes["pod_basis.pdnn"]);
    assert_eq!(after["dataset_targets.pdnn"], hashes["dataset_targets.pdnn"]);
}

#[test]
fn tampered_artifact_is_detected_and_rebuilt() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy(tmp.path());
    let store = pipeline::offline(&cfg).unwrap();
    let before = store.file_hashes()["pod_basis.pdnn"].clone();

    let path = tmp.path().join("pod_basis.pdnn");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();

    let reopened = ArtifactStore::open(tmp.path()).unwrap();
    assert!(matches!(Surrogate::load(&reopened), Err(Error::Format(_))));

    let (store, report) = pipeline::run_through(&cfg, "train").unwrap();
    let pod = report.iter().find(|(n, _)| n == "pod").unwrap();
    assert_eq!(pod.1, StageStatus::Ran);
    assert_eq!(store.file_hashes()["pod_basis.pdnn"], before);
}

#[test]
fn surrogate_online_matches_basis_expansion() {
    let tmp = tempfile::tempdir().unwrap();
    let store = pipeline::offline(&toy(tmp.path())).unwrap();
    let s = Surrogate::load(&store).unwrap();
    let mu = DMatrix::from_row_slice(3, 2, &[0.5, 0.5, 2.0, 1.0, 3.9, 1.9]);
    let out = s.online(&mu, DomainPolicy::Reject).unwrap();
    assert_eq!(out.solutions.shape(), (3, s.basis.nrows()));
    let c = s.model.forward(&mu).unwrap();
    let expected = c * s.basis.transpose();
    assert!((out.solutions - expected).amax() < 1e-12);

    let outside = DMatrix::from_row_slice(1, 2, &[5.0, 0.5]);
    assert!(matches!(s.online(&outside, DomainPolicy::Reject), Err(Error::OutOfDomain(..))));
    assert!(s.online(&outside, DomainPolicy::Warn).is_ok());

    let empty = s.online(&DMatrix::zeros(0, 2), DomainPolicy::Reject).unwrap();
    assert_eq!(empty.solutions.nrows(), 0);
}

#[test]
fn benchmark_reports_three_methods() {
    let tmp = tempfile::tempdir().unwrap();
    let store = pipeline::offline(&toy(tmp.path())).unwrap();
    let report = pipeline::benchmark(&store).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(names, ["rbf_fd", "reduced_ls", "pod_dnn"]);
    let fd = report.row("rbf_fd").unwrap();
    assert!(fd.mean_rel_error < 1e-12, "full solve compared with itself: {}", fd.mean_rel_error);
    let ls = report.row("reduced_ls").unwrap();
    assert!(ls.mean_rel_error < 0.1);
    assert!(report.rows.iter().all(|r| r.n_params == fd.n_params && r.n_params > 0));
}

#[test]
fn invalid_config_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("never");
    let mut cfg = toy(&dir);
    cfg.split = [0.5, 0.5, 0.5];
    let err = pipeline::offline(&cfg).unwrap_err();
    assert!(err.is_config(), "{err}");
    assert!(!dir.join("manifest.json").exists());
}

#[test]
fn config_file_round_trips_through_the_store() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy(tmp.path());
    let store = pipeline::run_through(&cfg, "nodes").unwrap().0;
    let loaded = pipeline::load_config(&store).unwrap();
    assert_eq!(loaded, cfg);
    let nodes = pipeline::load_nodes(&store).unwrap();
    assert_eq!(nodes.len(), cfg.n_nodes());
}
