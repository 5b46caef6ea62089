"""Smoke test for the groupreg Python module.

Build and install first:  maturin develop -m crates/py/Cargo.toml
Then run:                 python python/smoke_test.py
"""

import math
import sys
import tempfile
from pathlib import Path

import groupreg


def main() -> int:
    vx, vy, g = groupreg.compose((10.0, 0.0, 90.0), (10.0, 0.0, 90.0))
    assert abs(vx) < 1e-9 and abs(vy) < 1e-9 and abs(g) < 1e-9

    text = groupreg.config_text("desk", ["runs=2"])
    assert "runs = 2" in text, text

    try:
        groupreg.config_text("desk", ["no_such_key=1"])
    except ValueError:
        pass
    else:
        raise AssertionError("bad override accepted")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        images = groupreg.synth(tmp / "data", size=256, n=2, seed=3)
        ref = tmp / "data" / "reference.png"
        rows = groupreg.run(
            ref,
            images,
            tmp / "out",
            ground_truth=tmp / "data" / "ground_truth.csv",
            preset="desk",
            overrides=["runs=2", "feature_support=48"],
        )
        assert len(rows) == 2
        for r in rows:
            assert len(r["homography"]) == 9
            assert math.isfinite(r["rmse_m"])
            print(f"{r['id']}: {r['status']} rmse {r['rmse_m']:.2f} m, rotation error {r['rot_err_deg']:.2f} deg")
        assert (tmp / "out" / "solution.txt").exists()
        rigid = groupreg.register(ref, images, preset="desk", overrides=["feature_support=48"])
        assert len(rigid) == 2
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
