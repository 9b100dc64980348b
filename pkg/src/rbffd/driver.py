"""Solve / estimate / refine loop and its CSV artifacts."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import centers as centers_mod
from .bench import TestProblem, e_c, e_g, get_problem
from .refine import RefineParams, RefineResult, edge_indicators, refine
from .rbf import RbfConfig
from .stencil import StencilParams, select_stencils, uniformity_stats
from .system import assemble, solve, stencil_weights

log = logging.getLogger(__name__)

ERRORS_HEADER = ["step", "n_interior", "e_c", "e_g", "eps_bar", "v_max", "v_aver", "c_max",
                 "c_aver", "uncovered_grid_points"]
REFINE_HEADER = ["step", "eps_bar", "edges_marked", "interior_added", "boundary_added",
                 "reduction_rounds"]


class RunError(RuntimeError):
    def __init__(self, stage: str, step: int, cause: Exception):
        super().__init__(f"step {step}, stage '{stage}': {cause}")
        self.stage = stage
        self.step = step
        self.cause = cause


@dataclass
class RunConfig:
    problem: str = "tp1"
    # stencil selection
    k: int = 6
    v: float = 2.5
    c: float = 3.0
    m: int = 50
    # weights
    kernel: str = "phs"
    epsilon: float = 1e-5
    phs_exponent: int = 3
    poly_degree: int = 2
    cond_threshold: float = RbfConfig().cond_threshold
    # refinement; None means "use the problem's default"
    gamma: float = 0.5
    mu: float = 0.8
    n_percent: Optional[float] = None
    indicator: str = "eps1"
    reduce_threshold: Optional[bool] = None
    max_rounds: int = 30
    # initial set and stopping
    h0: Optional[float] = None  # default: 0.1 * domain diameter
    slit_clearance: Optional[float] = None
    max_steps: int = 20
    max_interior: int = 4000
    # output
    grid_step: float = 0.005
    compute_eg: bool = True
    output_dir: Optional[str] = None
    dump_centers: bool = True

    def stencil_params(self) -> StencilParams:
        return StencilParams(self.k, self.v, self.c, self.m)

    def rbf_config(self) -> RbfConfig:
        return RbfConfig(self.kernel, self.epsilon, self.phs_exponent, self.poly_degree,
                         self.cond_threshold)

    def refine_params(self, problem: TestProblem) -> RefineParams:
        n = problem.n_percent if self.n_percent is None else self.n_percent
        red = problem.reduce_threshold if self.reduce_threshold is None else self.reduce_threshold
        return RefineParams(self.gamma, self.mu, n, self.indicator, red, self.max_rounds)

    def validate(self) -> None:
        get_problem(self.problem)
        self.stencil_params()
        self.rbf_config()
        RefineParams(self.gamma, self.mu, self.n_percent or 1.0, self.indicator, False,
                     self.max_rounds)
        if self.h0 is not None and self.h0 <= 0:
            raise ValueError("h0 must be positive")
        if self.max_steps < 0 or self.max_interior < 1:
            raise ValueError("max_steps must be >= 0 and max_interior >= 1")
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(name: str, text: str):
    f = {fl.name: fl for fl in dataclasses.fields(RunConfig)}.get(name)
    if f is None:
        raise KeyError(f"unknown config key {name!r}")
    text = text.strip()
    default = f.default
    if text.lower() in ("none", "") and name in ("n_percent", "reduce_threshold", "h0",
                                                  "slit_clearance", "output_dir"):
        return None
    if name in ("reduce_threshold", "compute_eg", "dump_centers"):
        try:
            return _BOOL[text.lower()]
        except KeyError:
            raise ValueError(f"{name}: expected a boolean, got {text!r}") from None
    if name in ("problem", "kernel", "indicator", "output_dir"):
        return text
    if isinstance(default, int) and not isinstance(default, bool):
        return int(text)
    return float(text)


def parse_config(lines, overrides: Optional[dict] = None) -> RunConfig:
    """Flat ``key = value`` lines (``#`` comments) plus overrides, later wins."""
    values = {}
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"bad config line {raw!r}")
        values[key.strip()] = _coerce(key.strip(), val)
    for key, val in (overrides or {}).items():
        values[key] = _coerce(key, val) if isinstance(val, str) else val
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: Optional[str], overrides: Optional[dict] = None) -> RunConfig:
    lines = []
    if path:
        with open(path) as fh:
            lines = fh.readlines()
    return parse_config(lines, overrides)


@dataclass
class ErrorReport:
    step: int
    n_interior: int
    e_c: float
    e_g: float
    v_max: float
    v_aver: float
    c_max: float
    c_aver: float
    uncovered: int = 0
    eps_bar: Optional[float] = None
    refinement: Optional[RefineResult] = field(default=None, repr=False)

    def row(self) -> list:
        def fmt(x):
            return "" if x is None else repr(float(x))
        return [self.step, self.n_interior, fmt(self.e_c), fmt(self.e_g), fmt(self.eps_bar),
                fmt(self.v_max), fmt(self.v_aver), fmt(self.c_max), fmt(self.c_aver),
                self.uncovered]


def _stage(name, step, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except RunError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise RunError(name, step, exc) from exc


def run(config: RunConfig, problem: Optional[TestProblem] = None, on_step=None) -> list[ErrorReport]:
    """Run the adaptive loop; writes CSV artifacts when ``config.output_dir`` is set."""
    problem = problem or get_problem(config.problem)
    domain = problem.domain
    h0 = config.h0 if config.h0 is not None else 0.1 * domain.diameter()
    sp_, rc, rp = config.stencil_params(), config.rbf_config(), config.refine_params(problem)
    out = config.output_dir
    if out:
        os.makedirs(out, exist_ok=True)
    grid = None
    if config.compute_eg:
        from .bench import grid_points
        grid = grid_points(domain, config.grid_step)

    cs = _stage("initial_centers", 0, centers_mod.initial_centers, domain, h0,
                config.slit_clearance)
    prev = None
    reports: list[ErrorReport] = []
    for step in range(config.max_steps + 1):
        stencils = _stage("stencil", step, select_stencils, cs, sp_, domain)
        weights = _stage("weights", step, stencil_weights, cs, stencils, problem, rc)
        system = _stage("assemble", step, assemble, cs, stencils, weights, problem)
        u_hat = _stage("solve", step, solve, system)
        ec = e_c(cs, u_hat, problem)
        if grid is not None:
            ge = _stage("grid_error", step, e_g, cs, u_hat, problem, config.grid_step, grid)
            eg, unc = ge.rms, ge.uncovered
        else:
            eg, unc = float("nan"), 0
        stats = uniformity_stats(stencils)
        rep = ErrorReport(step, cs.n_interior, ec, eg, *stats, uncovered=unc)
        reports.append(rep)
        log.info("step %d: N=%d E_c=%.3e E_g=%.3e v_aver=%.2f c_aver=%.2f", step,
                 cs.n_interior, ec, eg, stats[1], stats[3])
        if out and config.dump_centers:
            centers_mod.write_csv(os.path.join(out, f"centers_{step}.csv"), cs, u_hat,
                                  problem.u(cs.points))
        last = step == config.max_steps or cs.n_interior >= config.max_interior
        if not last:
            ind = edge_indicators(stencils, u_hat, rp.indicator)
            res = _stage("refine", step, refine, cs, stencils, u_hat, rp, domain, prev, ind)
            rep.eps_bar = res.threshold
            rep.refinement = res
            prev = res.threshold
            if out:
                with open(os.path.join(out, f"refine_{step}.csv"), "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(REFINE_HEADER)
                    w.writerow([step, repr(float(res.threshold)), res.edges_marked,
                                res.interior_added, res.boundary_added, res.rounds])
            cs = res.centers
        if on_step is not None:
            on_step(rep)
        if last:
            break
    if out:
        write_errors(os.path.join(out, "errors.csv"), reports)
    return reports


def write_errors(path: str, reports: list[ErrorReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ERRORS_HEADER)
        for r in reports:
            w.writerow(r.row())


def radial_histogram(pts: np.ndarray, origin, bins: np.ndarray) -> np.ndarray:
    r = np.hypot(pts[:, 0] - origin[0], pts[:, 1] - origin[1])
    return np.histogram(r, bins=bins)[0]


def indicator_compare(config: RunConfig) -> dict[str, list[ErrorReport]]:
    """Run the same configuration with both indicators; writes paired CSVs."""
    problem = get_problem(config.problem)
    results = {}
    for kind in ("eps0", "eps1"):
        sub = None if config.output_dir is None else os.path.join(config.output_dir, kind)
        cfg = dataclasses.replace(config, indicator=kind, output_dir=sub)
        results[kind] = run(cfg, problem)
    if config.output_dir:
        _write_compare(config.output_dir, results, problem)
    return results


def _write_compare(out: str, results: dict, problem: TestProblem) -> None:
    a, b = results["eps0"], results["eps1"]
    with open(os.path.join(out, "compare.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "n_interior_eps0", "e_c_eps0", "e_g_eps0",
                    "n_interior_eps1", "e_c_eps1", "e_g_eps1"])
        for i in range(max(len(a), len(b))):
            ra = a[i].row() if i < len(a) else [i, "", "", ""]
            rb = b[i].row() if i < len(b) else [i, "", "", ""]
            w.writerow([i, ra[1], ra[2], ra[3], rb[1], rb[2], rb[3]])
    # radial center density of the final sets around the first singular point
    origin = problem.singular_points[0] if problem.singular_points else (0.0, 0.0)
    bins = np.linspace(0.0, problem.domain.diameter(), 41)
    hist = {}
    for kind in ("eps0", "eps1"):
        last = results[kind][-1].step
        path = os.path.join(out, kind, f"centers_{last}.csv")
        if os.path.exists(path):
            cs = centers_mod.read_csv(path, problem.domain)
            hist[kind] = radial_histogram(cs.points[cs.interior_ids], origin, bins)
    if len(hist) == 2:
        with open(os.path.join(out, "density.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r_lo", "r_hi", "count_eps0", "count_eps1"])
            for lo, hi, c0, c1 in zip(bins[:-1], bins[1:], hist["eps0"], hist["eps1"]):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c0), int(c1)])
