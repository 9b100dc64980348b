"""RBF-FD weights for L = Laplacian + c(x) on a single stencil.

Two kernels are available.  ``phs`` (default) is the polyharmonic spline
r**q augmented with bivariate polynomials, solved as a saddle-point system;
it is scale free and stable for any stencil on which the polynomial
constraints are consistent.  ``gaussian`` solves the plain interpolation
system for exp(-(eps*r)**2) in coordinates centered at the stencil center and
scaled by the stencil radius; if the system is too ill-conditioned, the
effective shape parameter is raised to the smallest value that brings the
condition number under ``cond_threshold``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

MACHINE_EPS = float(np.finfo(float).eps)
DEFAULT_COND_THRESHOLD = 1.0 / (100.0 * MACHINE_EPS)
KERNELS = ("phs", "gaussian")


class DegenerateStencil(ValueError):
    def __init__(self, message: str, stencil_id: Optional[int] = None):
        super().__init__(message if stencil_id is None else f"stencil {stencil_id}: {message}")
        self.stencil_id = stencil_id


@dataclass(frozen=True)
class RbfConfig:
    kernel: str = "phs"
    epsilon: float = 1e-5
    phs_exponent: int = 3
    poly_degree: int = 2
    cond_threshold: float = DEFAULT_COND_THRESHOLD

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if self.kernel == "gaussian" and not self.epsilon > 0.0:
            raise ValueError("gaussian kernel needs epsilon > 0")
        if self.phs_exponent < 1 or self.phs_exponent % 2 == 0:
            raise ValueError("phs exponent must be a positive odd integer")
        if self.poly_degree < -1:
            raise ValueError("poly_degree must be >= -1 (-1 means no polynomials)")


@dataclass(frozen=True)
class StencilWeights:
    weights: np.ndarray
    cond: float
    epsilon_eff: Optional[float] = None


def gaussian_phi(r, eps):
    return np.exp(-(eps * np.asarray(r)) ** 2)


def gaussian_lap(d, eps):
    e2d2 = (eps * np.asarray(d)) ** 2
    return 4.0 * eps ** 2 * np.exp(-e2d2) * (e2d2 - 1.0)


def phs_phi(r, q: int):
    return np.asarray(r, dtype=float) ** q


def phs_lap(r, q: int):
    # 2D Laplacian of r**q is q**2 r**(q-2); zero at r=0 for q >= 3
    r = np.asarray(r, dtype=float)
    if q == 1:
        with np.errstate(divide="ignore"):
            return np.where(r > 0.0, 1.0 / np.where(r > 0.0, r, 1.0), np.inf)
    return q * q * r ** (q - 2)


def monomials(degree: int) -> list[tuple[int, int]]:
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def poly_matrix(x: np.ndarray, degree: int) -> np.ndarray:
    """Columns x**a * y**b for every monomial up to ``degree``; works on stacks."""
    cols = [x[..., 0] ** a * x[..., 1] ** b for a, b in monomials(degree)]
    return np.stack(cols, axis=-1) if cols else np.zeros(x.shape[:-1] + (0,))


def poly_laplacian_at_origin(degree: int) -> np.ndarray:
    return np.array([2.0 if (a, b) in ((2, 0), (0, 2)) else 0.0 for a, b in monomials(degree)])


def _scaled(zeta, pts):
    x = np.asarray(pts, dtype=float) - np.asarray(zeta, dtype=float)
    rho = float(np.max(np.hypot(x[:, 0], x[:, 1])))
    if rho == 0.0:
        raise DegenerateStencil("stencil has zero radius")
    return x / rho, rho


def _distance_matrix(x):
    diff = x[..., :, None, :] - x[..., None, :, :]
    return np.sqrt((diff ** 2).sum(-1))


def _constraint_basis(P, Lp, stencil_id=None):
    """Orthonormal basis of range(P) and the matching constraint right-hand side.

    Rank-deficient P (e.g. xy vanishing on a five-point cross) is fine as long
    as the constraints stay consistent; the weights are unaffected.
    """
    if P.shape[1] == 0:
        return P, Lp
    U, s, Vt = np.linalg.svd(P, full_matrices=True)
    tol = s[0] * max(P.shape) * 1e-12
    r = int((s > tol).sum())
    if r < P.shape[1]:
        tail = Vt[r:] @ Lp
        if np.abs(tail).max() > 1e-8 * max(1.0, np.abs(Lp).max()):
            raise DegenerateStencil("polynomial constraints are inconsistent on this stencil",
                                    stencil_id)
    return U[:, :r], (Vt[:r] @ Lp) / s[:r]


def _phs_local(x, config: RbfConfig, stencil_id=None):
    q = config.phs_exponent
    n = len(x)
    A = phs_phi(_distance_matrix(x), q)
    rhs = phs_lap(np.hypot(x[:, 0], x[:, 1]), q)
    P = poly_matrix(x, config.poly_degree)
    Q, c = _constraint_basis(P, poly_laplacian_at_origin(config.poly_degree), stencil_id)
    r = Q.shape[1]
    K = np.zeros((n + r, n + r))
    K[:n, :n] = A
    K[:n, n:] = Q
    K[n:, :n] = Q.T
    cond = float(np.linalg.cond(K, 1))
    if not np.isfinite(cond) or cond > config.cond_threshold:
        raise DegenerateStencil(f"local system condition {cond:.3g} exceeds threshold", stencil_id)
    sol = np.linalg.solve(K, np.concatenate([rhs, c]))
    return sol[:n], cond


def _gauss_system(x, eps_eff):
    Phi = gaussian_phi(_distance_matrix(x), eps_eff)
    return Phi, float(np.linalg.cond(Phi, 1))


def gaussian_floor(x, eps_eff: float, threshold: float) -> float:
    """Smallest shape parameter >= eps_eff keeping cond(Phi) <= threshold (bisection in log eps)."""
    _, cond = _gauss_system(x, eps_eff)
    if np.isfinite(cond) and cond <= threshold:
        return eps_eff
    lo, hi = math.log(eps_eff), math.log(max(eps_eff, 1e-3))
    while True:
        _, cond = _gauss_system(x, math.exp(hi))
        if np.isfinite(cond) and cond <= threshold:
            break
        lo, hi = hi, hi + math.log(2.0)
        if hi > math.log(1e3):
            raise DegenerateStencil("no shape parameter gives an acceptable condition number")
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        _, cond = _gauss_system(x, math.exp(mid))
        if np.isfinite(cond) and cond <= threshold:
            hi = mid
        else:
            lo = mid
    return math.exp(hi)


def _gaussian_local(x, config: RbfConfig, rho: float, stencil_id=None):
    eps_eff = gaussian_floor(x, config.epsilon * rho, config.cond_threshold)
    Phi, cond = _gauss_system(x, eps_eff)
    rhs = gaussian_lap(np.hypot(x[:, 0], x[:, 1]), eps_eff)
    try:
        w = np.linalg.solve(Phi, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateStencil(str(exc), stencil_id) from exc
    return w, cond, eps_eff


def compute_weights(zeta, pts, c_at_zeta: float = 0.0, config: RbfConfig = RbfConfig(),
                    stencil_id: Optional[int] = None) -> StencilWeights:
    """Weights w_0..w_k with sum_i w_i u(pts[i]) ~ Lu(zeta).

    ``pts`` must start with ``zeta`` itself; ``c_at_zeta`` is added to w_0.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if len(np.unique(np.round(pts, 15), axis=0)) < len(pts):
        raise DegenerateStencil("repeated stencil points", stencil_id)
    x, rho = _scaled(zeta, pts)
    if config.kernel == "phs":
        w, cond = _phs_local(x, config, stencil_id)
        eps_eff = None
    else:
        w, cond, eps_eff = _gaussian_local(x, config, rho, stencil_id)
    w = w / rho ** 2
    if not np.all(np.isfinite(w)):
        raise DegenerateStencil("non-finite weights", stencil_id)
    w[0] += c_at_zeta
    return StencilWeights(w, cond, None if eps_eff is None else eps_eff / rho)


def compute_weights_batch(pts: np.ndarray, c_vals: np.ndarray, config: RbfConfig = RbfConfig(),
                          ids: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Weights for a stack of equally sized stencils ``pts[s, 0]`` = center.

    Returns the ``(S, n)`` weight array and per-stencil condition numbers.
    Agrees with :func:`compute_weights` stencil by stencil; the phs kernel is
    vectorized and falls back to the single-stencil path for rank-deficient
    polynomial blocks.
    """
    pts = np.asarray(pts, dtype=float)
    S, n, _ = pts.shape
    ids = np.arange(S) if ids is None else np.asarray(ids)
    W = np.empty((S, n))
    conds = np.empty(S)
    if config.kernel != "phs" or S == 0:
        for s in range(S):
            sw = compute_weights(pts[s, 0], pts[s], c_vals[s], config, int(ids[s]))
            W[s], conds[s] = sw.weights, sw.cond
        return W, conds

    x = pts - pts[:, :1, :]
    rho = np.hypot(x[..., 0], x[..., 1]).max(axis=1)
    if np.any(rho == 0.0):
        bad = int(ids[np.flatnonzero(rho == 0.0)[0]])
        raise DegenerateStencil("stencil has zero radius", bad)
    x = x / rho[:, None, None]
    q = config.phs_exponent
    A = phs_phi(_distance_matrix(x), q)
    rhs = phs_lap(np.hypot(x[..., 0], x[..., 1]), q)
    P = poly_matrix(x, config.poly_degree)
    M = P.shape[-1]
    Lp = poly_laplacian_at_origin(config.poly_degree)
    if M > n:
        full = np.zeros(S, dtype=bool)
    else:
        full = np.ones(S, dtype=bool)
        K = np.zeros((S, n + M, n + M))
        K[:, :n, :n] = A
        b = rhs
        if M:
            U, sv, Vt = np.linalg.svd(P, full_matrices=False)
            full = sv[:, -1] > sv[:, 0] * n * 1e-12
            K[:, :n, n:] = U
            K[:, n:, :n] = np.swapaxes(U, 1, 2)
            cvec = np.einsum("sij,j->si", Vt, Lp) / np.where(sv > 0, sv, 1.0)
            b = np.concatenate([rhs, cvec], axis=1)
        sel = np.flatnonzero(full)
        if len(sel):
            Ks = K[sel]
            c1 = np.linalg.cond(Ks, 1)
            ok = np.isfinite(c1) & (c1 <= config.cond_threshold)
            if not ok.all():
                bad = int(ids[sel[np.flatnonzero(~ok)[0]]])
                raise DegenerateStencil("local system condition exceeds threshold", bad)
            sol = np.linalg.solve(Ks, b[sel][..., None])[..., 0]
            W[sel] = sol[:, :n] / rho[sel, None] ** 2
            conds[sel] = c1
    for s in np.flatnonzero(~full):
        w, c1 = _phs_local(x[s], config, int(ids[s]))
        W[s] = w / rho[s] ** 2
        conds[s] = c1
    if not np.all(np.isfinite(W)):
        raise DegenerateStencil("non-finite weights", int(ids[np.flatnonzero(~np.isfinite(W).all(1))[0]]))
    W[:, 0] += c_vals
    return W, conds
