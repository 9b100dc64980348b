import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbffd import centers as c
from rbffd.bench import curved_slit_domain, reentrant_domain, sector_domain
from rbffd.geometry import box, contains, dist_to_boundary


def random_set(n, seed=0, dom=None):
    dom = dom or box(0, 1, 0, 1)
    rng = np.random.default_rng(seed)
    p = rng.uniform(0, 1, (n, 2))
    return dom, c.from_points(dom, p, np.zeros(n, bool))


def test_initial_centers_square():
    dom = box(0, 1, 0, 1)
    cs = c.initial_centers(dom, 0.1)
    b = cs.points[cs.boundary]
    # all four corners present, boundary spacing <= h0
    for corner in [(0, 0), (1, 0), (1, 1), (0, 1)]:
        assert np.min(np.hypot(*(b - corner).T)) < 1e-14
    assert len(b) == 40
    inner = cs.points[~cs.boundary]
    assert contains(dom, inner).all()
    assert (dist_to_boundary(dom, inner) >= 0.05 - 1e-12).all()
    # lattice spacing is h0
    from scipy.spatial import cKDTree
    d, _ = cKDTree(inner).query(inner, k=2)
    assert d[:, 1].min() == pytest.approx(0.1)


def test_initial_centers_deterministic():
    dom = sector_domain()
    a = c.initial_centers(dom, 0.07)
    b = c.initial_centers(dom, 0.07)
    assert np.array_equal(a.points, b.points)


def test_initial_centers_rejects_huge_h0():
    with pytest.raises(ValueError, match="h0"):
        c.initial_centers(box(0, 1, 0, 1), 5.0)
    with pytest.raises(ValueError):
        c.initial_centers(box(0, 1, 0, 1), 0.0)


def test_slit_boundary_sampled_and_clearance():
    dom = reentrant_domain(2 * math.pi)
    cs = c.initial_centers(dom, 0.2)
    b = cs.points[cs.boundary]
    on_slit = b[(np.abs(b[:, 1]) < 1e-14) & (b[:, 0] >= 0)]
    assert len(on_slit) >= 6  # (0,0), (1,0) and interior slit samples
    inner = cs.points[~cs.boundary]
    assert np.all(dom.segments[5].closest(inner)[0] >= 0.05)


def test_knn_excludes_self_and_breaks_ties_by_id():
    dom = box(-1, 1, -1, 1)
    pts = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1], [0.5, 0.5]], float) * 0.5
    cs = c.from_points(dom, pts, np.zeros(6, bool))
    ids = c.knn(cs, 0, 4)
    assert list(ids) == [5, 1, 2, 3]  # 5 is at distance 0.354 < 0.5
    ids = c.knn(cs, np.array([0.0, 0.0]), 3)
    assert list(ids) == [0, 5, 1]


@pytest.mark.parametrize("n", [10, 200, 5000])
def test_knn_matches_bruteforce(n):
    dom, cs = random_set(n, seed=n)
    rng = np.random.default_rng(1)
    for z in rng.choice(n, min(n, 20), replace=False):
        for k in (1, 6, min(50, n - 1)):
            assert np.array_equal(c.knn(cs, int(z), k), c.knn_bruteforce(cs, int(z), k))


def test_knn_visibility_matches_bruteforce_on_slit_domain():
    dom = curved_slit_domain()
    cs = c.initial_centers(dom, 0.1)
    for z in cs.interior_ids[::7]:
        assert np.array_equal(c.knn(cs, int(z), 20, dom), c.knn_bruteforce(cs, int(z), 20, dom))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(1, 10), st.integers(0, 2**31 - 1))
def test_knn_property(n, k, seed):
    # lattice-like data with many exact distance ties
    rng = np.random.default_rng(seed)
    p = rng.integers(0, 6, (n, 2)) / 5.0
    p = np.unique(p, axis=0)
    cs = c.from_points(box(-1, 2, -1, 2), p, np.zeros(len(p), bool))
    z = int(rng.integers(len(p)))
    assert np.array_equal(c.knn(cs, z, k), c.knn_bruteforce(cs, z, k))


def test_csv_roundtrip(tmp_path):
    dom = sector_domain()
    cs = c.initial_centers(dom, 0.2)
    u = np.arange(len(cs), dtype=float)
    path = tmp_path / "centers.csv"
    c.write_csv(path, cs, u, u + 1)
    assert path.read_text().splitlines()[0] == "x,y,kind,u_hat,u_exact"
    back = c.read_csv(path, dom)
    assert np.array_equal(back.points, cs.points)
    assert np.array_equal(back.boundary, cs.boundary)
    assert np.array_equal(back.segment[back.boundary] >= 0, np.ones(back.boundary.sum(), bool))


def test_extended_keeps_ids():
    dom, cs = random_set(10)
    out = cs.extended(np.array([[0.5, 0.5]]), np.array([False]), np.array([-1]), np.array([np.nan]))
    assert len(out) == 11 and np.array_equal(out.points[:10], cs.points)
    assert out.n_interior == 11
