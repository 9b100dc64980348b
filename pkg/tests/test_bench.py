import math

import numpy as np
import pytest

from rbffd import bench as B
from rbffd.centers import from_points, initial_centers
from rbffd.geometry import box, blocked_many, contains, dist_to_boundary

PI = math.pi


def polar(r, phi):
    return np.array([[r * math.cos(phi), r * math.sin(phi)]])


def fd_laplacian(u, p, h=1e-4):
    """Fourth-order central differences."""
    out = 0.0
    for d in (np.array([h, 0.0]), np.array([0.0, h])):
        out = out + (-u(p + 2 * d) + 16 * u(p + d) - 30 * u(p) + 16 * u(p - d) - u(p - 2 * d))
    return out / (12 * h * h)


def sample_interior(prob, n, rng, margin=0.05, h=1e-4):
    dom = prob.domain
    x0, x1, y0, y1 = dom.bounding_box()
    out = []
    while sum(len(o) for o in out) < n:
        p = rng.uniform([x0, y0], [x1, y1], (4 * n, 2))
        p = p[contains(dom, p) & (dist_to_boundary(dom, p) > 3 * h)]
        for s in prob.singular_points:
            p = p[np.hypot(*(p - np.asarray(s)).T) > margin]
        out.append(p)
    return np.vstack(out)[:n]


def test_tp1_values():
    P = B.get_problem("tp1")
    assert B.exact_u(P, polar(1.0, 0.0))[0] == pytest.approx(1.0)
    assert B.exact_u(P, polar(0.5, PI / 2))[0] == pytest.approx(0.314980, abs=1e-6)
    assert B.rhs_f(P, polar(0.3, 1.0))[0] == 0.0
    # angle measured on the domain's branch: continuous across phi = pi
    a = B.exact_u(P, polar(0.5, PI - 1e-9))[0]
    b = B.exact_u(P, polar(0.5, -PI + 1e-9))[0]
    assert a == pytest.approx(b, abs=1e-6) or abs(a - b) < 1e-6


def test_tp3_values():
    om = 5 * PI / 4
    P = B.get_problem("tp3@omega=5*pi/4")
    al = PI / om
    assert B.exact_u(P, polar(0.5, 3.5))[0] == pytest.approx(0.5 ** al * math.sin(al * 3.5))
    # vanishes on both straight edges through the corner
    assert abs(B.exact_u(P, polar(0.4, 0.0))[0]) < 1e-15
    assert abs(B.exact_u(P, polar(0.4, om - 1e-15))[0]) < 1e-12


def test_tp5_tp6_values():
    P = B.get_problem("tp5@alpha=1/(10*pi)")
    assert B.exact_u(P, np.array([[0.0, 0.0]]))[0] == pytest.approx(0.0, abs=1e-12)
    for pid in ("tp6a", "tp6b"):
        P = B.get_problem(pid)
        x0 = np.array([P.params["x0"]])
        assert B.exact_u(P, x0)[0] == 1.0
        assert B.rhs_f(P, x0)[0] == pytest.approx(-4 * P.params["alpha"])
    assert B.get_problem("tp6a").params["alpha"] == 1000.0


@pytest.mark.parametrize("pid", B.ALL_PROBLEMS)
def test_f_equals_Lu(pid):
    P = B.get_problem(pid)
    p = sample_interior(P, 200, np.random.default_rng(0))
    lu = fd_laplacian(P.u, p) + P.c(p) * P.u(p)
    assert np.abs(P.f(p) - lu).max() <= 1e-4


@pytest.mark.parametrize("pid", B.ALL_PROBLEMS)
def test_g_is_u_on_boundary(pid):
    P = B.get_problem(pid)
    rng = np.random.default_rng(1)
    segs = P.domain.segments
    pts = np.array([segs[i].point(t) for i, t in zip(rng.integers(len(segs), size=200),
                                                     rng.uniform(0, 1, 200))])
    assert np.abs(P.g(pts) - P.u(pts)).max() <= 1e-12
    assert np.isfinite(P.g(pts)).all()


def test_tp4_continuous_away_from_slit():
    P = B.get_problem("tp4")
    dom = P.domain
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 100:
        a, b = rng.uniform(-0.95, 0.95, (2, 2))
        if blocked_many(dom, a, b[None, :])[0]:
            continue
        t = np.linspace(0, 1, 2001)[:, None]
        seg = a + t * (b - a)
        if dist_to_boundary(dom, seg).min() < 0.02:
            continue
        jumps = np.abs(np.diff(P.u(seg)))
        assert jumps.max() < 0.01
        checked += 1


def test_tp4_vanishes_on_slit_positive_both_sides():
    P = B.get_problem("tp4")
    arc = P.domain.segments[5]
    assert arc.kind == "arc"
    for t in (0.25, 0.5, 0.75):
        m = arc.point(t)
        nrm = (m - np.asarray(arc.center)) / arc.radius
        assert abs(P.u(m[None])[0]) < 1e-7
        for side in (1.0, -1.0):
            a, b = P.u((m + side * 1e-6 * nrm)[None])[0], P.u((m + side * 4e-6 * nrm)[None])[0]
            assert a > 0 and b / a == pytest.approx(4.0, rel=1e-2)


def test_problem_ids():
    assert B.get_problem("tp3@omega=2*pi").domain.slits
    assert B.get_problem("tp5@alpha=1/(50*pi)").params["alpha"] == pytest.approx(1 / (50 * PI))
    assert B.parse_value("-pi/4+1") == pytest.approx(1 - PI / 4)
    with pytest.raises(ValueError):
        B.get_problem("tp3")
    with pytest.raises(ValueError):
        B.get_problem("tp9")
    with pytest.raises(ValueError):
        B.parse_value("__import__('os')")


def test_e_c_examples():
    dom = box(0, 1, 0, 1)
    P = B.TestProblem("q", dom, lambda p: p[:, 0] ** 2, lambda p: 2 + 0 * p[:, 0],
                      lambda p: 0 * p[:, 0])
    cs = from_points(dom, np.array([[0.2, 0.2], [0.5, 0.5], [0, 0]]),
                     np.array([False, False, True]))
    u = P.u(cs.points)
    assert B.e_c(cs, u, P) == 0.0
    assert B.e_c(cs, u + np.array([3.0, 4.0, 100.0]), P) == pytest.approx(5 / math.sqrt(2))
    assert B.e_c(cs, u - 0.25, P) == pytest.approx(0.25)


def test_e_g_exact_for_linear():
    dom = box(0, 1, 0, 1)
    P = B.TestProblem("lin", dom, lambda p: p[:, 0], lambda p: 0 * p[:, 0], lambda p: 0 * p[:, 0])
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], float)
    cs = from_points(dom, pts, np.array([True] * 4 + [False]))
    ge = B.e_g(cs, P.u(cs.points), P, step=0.05)
    assert ge.rms <= 1e-15 and ge.uncovered == 0


def brute_interpolate(pts, vals, tris, q):
    """Loop over triangles; barycentric coordinates by Cramer's rule."""
    out = np.full(len(q), np.nan)
    for i, x in enumerate(q):
        for t in tris:
            a, b, c = pts[t]
            det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
            l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (x[1] - a[1])) / det
            l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det
            l0 = 1 - l1 - l2
            if min(l0, l1, l2) >= -1e-12:
                out[i] = l0 * vals[t[0]] + l1 * vals[t[1]] + l2 * vals[t[2]]
                break
    return out


def test_e_g_matches_bruteforce_interpolation():
    from scipy.spatial import Delaunay
    dom = box(0, 1, 0, 1)
    u = lambda p: p[:, 0] ** 2 - 0.5 * p[:, 0] * p[:, 1] + 0.3
    P = B.TestProblem("quad", dom, u, lambda p: 0 * p[:, 0], lambda p: 0 * p[:, 0])
    rng = np.random.default_rng(4)
    inner = rng.uniform(0.02, 0.98, (100, 2))
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    cs = from_points(dom, np.vstack([corners, inner]), np.array([True] * 4 + [False] * 100))
    u_hat = u(cs.points) + rng.normal(scale=1e-3, size=len(cs))
    step = 0.05
    ge = B.e_g(cs, u_hat, P, step=step)
    grid = B.grid_points(dom, step)
    tri = Delaunay(cs.points)
    vals = brute_interpolate(cs.points, u_hat, tri.simplices, grid)
    ok = np.isfinite(vals)
    want = math.sqrt(np.mean((vals[ok] - u(grid[ok])) ** 2))
    assert ge.rms == pytest.approx(want, rel=1e-12)
    assert ge.n_points == ok.sum() and ge.uncovered == (~ok).sum()


def test_e_g_drops_triangles_outside_nonconvex_domain():
    from scipy.spatial import Delaunay
    P = B.get_problem("tp3@omega=3*pi/2")
    corners = np.array([[0, 0], [1, 0], [1, 1], [-1, 1], [-1, -1], [0, -1]], float)
    pts = np.vstack([corners, [[-0.5, 0.5], [0.5, 0.5], [-0.5, -0.5]]])
    cs = from_points(P.domain, pts, np.array([True] * 6 + [False] * 3))
    tri = Delaunay(cs.points)
    keep = B.kept_triangles(cs, P.domain, tri)
    cent = cs.points[tri.simplices].mean(axis=1)
    assert contains(P.domain, cent[keep]).all()
    assert not contains(P.domain, cent[~keep]).any() and (~keep).any()
    ge = B.e_g(cs, P.u(cs.points), P, step=0.05)
    assert ge.uncovered == 0 and math.isfinite(ge.rms)


def test_e_g_counts_grid_points_behind_slit():
    P = B.get_problem("tp3@omega=2*pi")
    # the edge between the two interior points crosses the slit
    pts = np.array([[0, 0], [1, 1], [-1, 1], [-1, -1], [1, -1], [0.5, 0.5], [0.5, -0.5]], float)
    cs = from_points(P.domain, pts, np.array([True] * 5 + [False] * 2))
    ge = B.e_g(cs, P.u(cs.points), P, step=0.05)
    assert ge.uncovered > 0
