"""Builds the pymwclust extension and exercises its main entry points.

Usage: python3 python/smoke_test.py [--no-build]
"""

import json
import math
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_and_stage() -> Path:
    if "--no-build" not in sys.argv:
        subprocess.run(
            ["cargo", "build", "--release", "-p", "pymwclust", "--features", "extension-module"],
            cwd=ROOT,
            check=True,
        )
    suffix = {"darwin": ".dylib", "win32": ".dll"}.get(sys.platform, ".so")
    built = ROOT / "target" / "release" / f"libpymwclust{suffix}"
    if sys.platform == "win32":
        built = ROOT / "target" / "release" / "pymwclust.dll"
    stage = Path(tempfile.mkdtemp(prefix="pymwclust-"))
    ext = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(built, stage / f"pymwclust{ext}")
    return stage


def main() -> None:
    sys.path.insert(0, str(build_and_stage()))
    import pymwclust as mw

    # two-way estimator on a 3-observation chain: pairs (0,1) via G and (1,2) via H
    scheme = mw.ClusterScheme(["a", "a", "b"], [0, 1, 1])
    assert scheme.n == 3 and scheme.num_clusters(0) == 2
    assert scheme.neighborhood(0) == [0, 1]
    q = scheme.cgm([1.0, 2.0, 3.0])
    expected = 1 + 4 + 9 + 2 * (1 * 2 + 2 * 3)
    assert math.isclose(q[0][0], expected), q
    q_ie = scheme.cgm([1.0, 2.0, 3.0], method="inclusion-exclusion")
    assert math.isclose(q_ie[0][0], expected)

    singles = mw.ClusterScheme(list(range(30)), list(range(30)))
    assert singles.leverage([1.0] * 30) == (1 / 30, 1 / 30)

    sim = mw.Simulator("nonzero-mean-triple", m=1)
    assert sim.bias_term == -1.0

    sim = mw.Simulator("additive-re", m=10, seed=2024, regression=True)
    y, d = sim.draw_regression(0)
    fit = mw.estimate(y, d, sim.scheme())
    assert abs(fit["theta_hat"] - 1.0) < 3 * fit["sigma_hat"], fit["theta_hat"]

    report = sim.coverage(reps=200, seed=1, target="regression-theta")
    assert report["reps"] == 200 and 0.0 <= report["coverage_95"] <= 1.0
    again = sim.coverage(reps=200, seed=1, target="regression-theta", threads=1)
    assert report == again

    bound = mw.Simulator("additive-re", m=8).bound()
    assert bound["term_third"] == 0.0
    assert math.isclose(bound["d_k_bound"], mw.kolmogorov_bound(bound["d_w_bound"]))

    try:
        mw.kolmogorov_bound(-1.0)
    except mw.MwclustError:
        pass
    else:
        raise AssertionError("negative d_W accepted")

    code, out, _ = mw.run_cli(["bound", "--dw", "0.04"])
    assert code == 0 and json.loads(out)["results"]["d_k_bound"] > 0

    print("pymwclust smoke test passed")


if __name__ == "__main__":
    main()
