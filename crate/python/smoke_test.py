"""Smoke test for the tdcr_mdn extension module.

Build and install the module first, e.g. `maturin develop -m crates/py/Cargo.toml`
or `pip install ./crates/py`, then run `python3 python/smoke_test.py`.
"""

import math
import os
import tempfile

import tdcr_mdn as t


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    u = [math.log(2.0), 0.0, 0.0, 0.5, 0.0, 0.0]
    p = t.reconstruct_precision(u)
    close(p[0][0], 4.0, 1e-12)
    close(p[0][1], 1.0, 1e-12)
    close(t.log_sqrt_det_precision(u), math.log(2.0), 1e-12)

    g = t.Gmm([(0.9, (0.0, 0.0, 0.0), [0.0] * 6), (0.1, (1.0, 0.0, 0.0), [0.0] * 6)])
    assert len(g) == 2
    close(g.pdf((0.0, 0.0, 0.0)), 0.9 * (2 * math.pi) ** -1.5 + 0.1 * (2 * math.pi) ** -1.5 * math.exp(-0.5), 1e-12)
    pts = g.sample(2000, 7)
    assert pts == g.sample(2000, 7)
    nll = g.reduced_nll(pts)
    naive = -sum(math.log(g.pdf(x)) for x in pts) / len(pts)
    close(nll + 1.5 * math.log(2 * math.pi), naive, 1e-8)
    assert not g.mode_collapse()
    assert t.Gmm.from_text(g.to_text()).weights == g.weights

    cloud = t.simulate_config_cloud([0.01, 0.0, 0.0, 0.0], approaches=2, points=100, seed=1)
    assert len(cloud) == 200
    net = t.Mdn(components=3, seed=2, centroid=(0.0, 0.0, 0.1), trunk=[16], head=[8])
    mix = net.forward([0.01, 0.0, 0.0, 0.0])
    close(sum(mix.weights), 1.0, 1e-12)
    loss = net.loss([([0.01, 0.0, 0.0, 0.0], cloud)])
    assert math.isfinite(loss)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.txt")
        net.save(path)
        again = t.Mdn.load(path)
        assert again.forward([0.01, 0.0, 0.0, 0.0]).to_text() == mix.to_text()

    sigma = 0.01
    g = t.Gmm([(1.0, (0.0, 0.0, 0.0), [-math.log(sigma)] * 3 + [0.0] * 3)])
    wall = t.Mesh.box((0.01, -0.1, -0.1), (0.21, 0.1, 0.1))
    assert wall.watertight and wall.contains((0.1, 0.0, 0.0))
    tail = 0.5 * math.erfc(1.0 / math.sqrt(2.0))
    close(t.config_collision_bound(g, wall), tail, 1e-9)
    est, se = t.mc_collision_estimate(g, wall, 20000, 3)
    assert abs(est - tail) <= 4 * se
    close(t.trajectory_collision_bound([0.5, 0.5]), 0.75, 1e-12)

    try:
        t.Gmm([(0.5, (0.0, 0.0, 0.0), [0.0] * 6)])
    except ValueError:
        pass
    else:
        raise AssertionError("unnormalized weights were accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
