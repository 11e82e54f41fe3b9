"""Smoke test for the `meshrom` extension module.

Build the library first:

    cargo build -p meshfree-rom-py --features extension-module

then run `python python/smoke.py`. The script copies the compiled library
next to a temporary `meshrom` module name, so no installer is needed.
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_extension(tmp):
    for profile in ("release", "debug"):
        for name in ("libmeshrom.so", "libmeshrom.dylib", "meshrom.dll"):
            lib = ROOT / "target" / profile / name
            if lib.exists():
                suffix = ".pyd" if name.endswith(".dll") else ".so"
                dest = pathlib.Path(tmp) / ("meshrom" + suffix)
                shutil.copy(lib, dest)
                spec = importlib.util.spec_from_file_location("meshrom", dest)
                module = importlib.util.module_from_spec(spec)
                spec.loader.exec_module(module)
                return module
    sys.exit("extension library not found; build it with cargo first")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        meshrom = load_extension(tmp)
        print("meshrom", meshrom.__version__)

        interior, boundary = meshrom.generate_nodes(100, 30, seed=1)
        assert len(interior) == 100 and len(boundary) == 30
        assert all(math.hypot(x, y) < 1.0 for x, y in interior)

        rows = [[math.sin(i * 0.1) * j + math.cos(i * 0.2) for j in range(1, 6)] for i in range(40)]
        basis, sigma = meshrom.pod(rows, 1e-10)
        assert sigma == sorted(sigma, reverse=True)
        assert 1 <= len(basis[0]) <= 2, "rank-2 snapshots need at most two modes"

        run = pathlib.Path(tmp) / "run"
        stages = meshrom.run_offline(str(run), preset="toy", seed=3)
        print("offline:", ", ".join(f"{s}={r}" for s, r in stages))
        again = meshrom.run_offline(str(run), preset="toy", seed=3)
        assert all(r == "skipped" for _, r in again), again

        surrogate = meshrom.Surrogate(str(run))
        lo, hi = zip(*surrogate.bounds)
        mid = [0.5 * (a + b) for a, b in zip(lo, hi)]
        u = surrogate.evaluate([mid, list(lo)])
        assert len(u) == 2 and len(u[0]) == surrogate.n_nodes
        try:
            surrogate.evaluate([[hi[0] + 1.0, hi[1]]])
        except ValueError:
            pass
        else:
            raise AssertionError("out-of-domain parameter accepted")

        for method, err, secs in meshrom.benchmark(str(run)):
            print(f"{method:<11} error {err:.3e}  {secs:.3e} s")
    print("ok")


if __name__ == "__main__":
    main()
