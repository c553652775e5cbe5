"""Smoke test for the lt_py extension: simulate two sessions of a small
street, run the full pipeline, and check the metrics.

Build first:
    cargo build -p lt-py --release && cp target/release/liblt_py.so python/lt_py.so
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import lt_py  # noqa: E402

WORLD = """\
SENSOR channels=16 fov_up=3 fov_down=-25 az_step=1 max_range=20 noise=0.01 seed=3
GROUND 0 -20 -20 40 20
BOX 4 -9 3 6 3 6 static
BOX 14 -9 2.5 6 3 5 static
BOX 5 9 3.5 6 3 7 static
BOX 15 9 2.5 7 3 5 static
BOX 8 -4 1.25 2 2 2.5 disappear sessions=1
BOX 12 4 1.25 2 3 2.5 appear sessions=2
TRAJ 1 0,0 20,0
TRAJ 2 0,0 20,0
"""

SENSOR = {"channels": "16", "fov_up": "3", "fov_down": "-25", "az_step": "1", "max_range": "20"}


def main():
    assert lt_py.__version__

    a = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]
    assert lt_py.chamfer_distance(a, a) == 0.0
    assert abs(lt_py.chamfer_distance(a, [(x, y, z + 0.5) for x, y, z in a]) - 0.5) < 1e-12

    with tempfile.TemporaryDirectory() as tmp:
        world = os.path.join(tmp, "street.world")
        with open(world, "w") as f:
            f.write(WORLD)
        s1, s2 = os.path.join(tmp, "s1"), os.path.join(tmp, "s2")
        assert lt_py.simulate_session(world, 1, s1) > 0
        assert lt_py.simulate_session(world, 2, s2) > 0

        try:
            lt_py.simulate_session(world, 9, os.path.join(tmp, "s9"))
            raise AssertionError("unknown session accepted")
        except ValueError:
            pass

        out = os.path.join(tmp, "run")
        summary = lt_py.run_pipeline(s1, [s2], out, SENSOR)
        assert summary["sessions"] == [1, 2], summary
        assert summary["live_head"] == 1 and summary["meta_head"] == 1, summary

        t, yaw = lt_py.ate(os.path.join(out, "aligned", "session_2", "graph.txt"), os.path.join(s2, "gt_poses.txt"))
        assert t < 0.1, t

        scan = os.path.join(s1, "scans", "000000.xyz")
        r = lt_py.chamfer_patches(scan, scan, patch_size=5.0, min_points=10)
        assert r["np_valid"] > 0 and r["max"] == 0.0, r

        try:
            lt_py.run_pipeline(os.path.join(tmp, "missing"), [s2], os.path.join(tmp, "o"))
            raise AssertionError("missing session accepted")
        except ValueError as e:
            assert "missing" in str(e)

    print(f"lt_py {lt_py.__version__}: smoke test passed (ate {t:.3f} m, {yaw:.3f} deg)")


if __name__ == "__main__":
    main()
