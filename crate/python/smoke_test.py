"""Builds the extension module with cargo and exercises it from Python.

Usage: python3 python/smoke_test.py
"""

import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build(dest):
    subprocess.run(
        ["cargo", "build", "--release", "-p", "cascade-bo-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libcascade_bo_py.so"
    shutil.copy(lib, Path(dest) / "cascade_bo_py.so")
    sys.path.insert(0, str(dest))


def main():
    with tempfile.TemporaryDirectory() as tmp:
        build(tmp)
        import cascade_bo_py as cb

        # EI against the closed form written out here
        mu, sd, f = 0.3, 0.7, 0.5
        z = (mu - f) / sd
        pdf = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        cdf = 0.5 * (1 + math.erf(z / math.sqrt(2)))
        assert abs(cb.ei(mu, sd, f) - (sd * pdf + (mu - f) * cdf)) < 1e-12

        k = cb.gaussian_kernel(2.0, [], [0.5, 1.0], [0.0, 0.0], [0.5, 1.0])
        assert abs(k - 2.0 * math.exp(-1.0)) < 1e-12

        assert abs(cb.sigma_lipschitz_bound(4.0, 0.5, 2) - math.sqrt(2) * 2.0 / 0.5) < 1e-12
        try:
            cb.sigma_lipschitz_bound(1.0, 1.0, 1, nu=0.5)
        except ValueError:
            pass
        else:
            raise AssertionError("nu = 1/2 must be rejected")

        c = cb.regret_constants(2, 1.0, 0.5, 2.0)
        assert c["c0"] == 0.5 * 2.0 + 1.0 + 1.0 and not c["overflow"]

        names = cb.list_benchmarks()
        assert "sphere-3-unscaled" in names and "samplepath-3" in names
        value, mids = cb.evaluate("sphere-3-unscaled", 0, [[0.0, 0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        assert len(mids) == 2 and math.isfinite(value)

        out = Path(tmp) / "out"
        summary = json.loads(
            cb.run('benchmark = "sphere-3-unscaled"\nmethod = "random"\niterations = 4\n', str(out))
        )
        assert summary["seeds"][0]["final_regret"] >= 0.0
        lines = (out / "trace.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 4 * 3, len(lines)

    print("python smoke test passed")


if __name__ == "__main__":
    main()
