"""Assembly and direct solution of the RBF-FD system over interior centers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .bench import TestProblem
from .centers import CenterSet
from .rbf import RbfConfig, compute_weights_batch
from .stencil import Stencil


class AssemblyError(ValueError):
    pass


class SingularSystem(RuntimeError):
    pass


@dataclass
class SparseSystem:
    """Rows are interior centers; boundary unknowns are moved to the right-hand side."""

    A: sp.csr_matrix
    b: np.ndarray
    interior_ids: np.ndarray
    boundary_values: np.ndarray  # g at every center (nan for interior ones)

    @property
    def n(self) -> int:
        return len(self.interior_ids)


def stencil_weights(cs: CenterSet, stencils: Sequence[Stencil], problem: TestProblem,
                    config: RbfConfig = RbfConfig()) -> list[np.ndarray]:
    """Weight rows (w_0 already shifted by c(center)) for each stencil."""
    out: list[np.ndarray] = [None] * len(stencils)  # type: ignore[list-item]
    by_size: dict[int, list[int]] = {}
    for i, s in enumerate(stencils):
        by_size.setdefault(len(s.points), []).append(i)
    for _, idx in sorted(by_size.items()):
        pts = np.stack([stencils[i].points for i in idx])
        cvals = problem.c(pts[:, 0, :])
        W, _ = compute_weights_batch(pts, cvals, config, np.array([stencils[i].center for i in idx]))
        for j, i in enumerate(idx):
            out[i] = W[j]
    return out


def assemble(cs: CenterSet, stencils: Sequence[Stencil], weights: Sequence[np.ndarray],
             problem: TestProblem) -> SparseSystem:
    interior = cs.interior_ids
    row_of = -np.ones(len(cs), dtype=int)
    row_of[interior] = np.arange(len(interior))
    by_center = {s.center: (s, w) for s, w in zip(stencils, weights)}
    g = np.full(len(cs), np.nan)
    bids = cs.boundary_ids
    if len(bids):
        g[bids] = problem.g(cs.points[bids])
    f = problem.f(cs.points[interior]) if len(interior) else np.zeros(0)
    rows, cols, vals = [], [], []
    b = np.array(f, dtype=float)
    for r, z in enumerate(interior):
        try:
            st, w = by_center[int(z)]
        except KeyError:
            raise AssemblyError(f"no stencil for interior center {int(z)}") from None
        ids = np.asarray(st.ids)
        w = np.asarray(w)
        inner = row_of[ids] >= 0
        rows.append(np.full(inner.sum(), r))
        cols.append(row_of[ids[inner]])
        vals.append(w[inner])
        if (~inner).any():
            b[r] -= float(w[~inner] @ g[ids[~inner]])
    n = len(interior)
    if n:
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
    else:
        A = sp.csr_matrix((0, 0))
    A.sum_duplicates()
    return SparseSystem(A, b, interior, g)


def solve(system: SparseSystem, rtol: float = 1e-10) -> np.ndarray:
    """Sparse LU solve; returns u_hat on all centers (boundary entries = g)."""
    u = system.boundary_values.copy()
    if system.n == 0:
        return u
    A = system.A.tocsc()
    try:
        lu = splu(A)
    except RuntimeError as exc:
        diag = np.abs(A.diagonal())
        raise SingularSystem(f"LU factorization failed ({exc}); min |diag| = {diag.min():.3g} "
                             f"at row {int(diag.argmin())}") from exc
    x = lu.solve(system.b)
    bnorm = np.linalg.norm(system.b)
    r = system.b - system.A @ x
    if np.linalg.norm(r) > rtol * bnorm:
        x += lu.solve(r)  # one step of iterative refinement
    res = np.linalg.norm(system.A @ x - system.b)
    if not np.all(np.isfinite(x)) or (res > rtol * bnorm if bnorm > 0 else res > rtol):
        Udiag = np.abs(lu.U.diagonal())
        raise SingularSystem(f"residual {res:.3g} vs |b| {bnorm:.3g}; smallest pivot "
                             f"{Udiag.min():.3g}")
    u[system.interior_ids] = x
    return u


def write_coo(path, system: SparseSystem) -> None:
    coo = system.A.tocoo()
    with open(path, "w") as fh:
        fh.write("row col value\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
