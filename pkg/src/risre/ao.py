"""Alternating optimisation over transmit powers and RIS phases.

Each outer iteration evaluates the DE, updates the eigen-powers by the
quadratic transform with the auxiliaries frozen, refreshes the DE, updates
the phases by WMMSE/BCD and evaluates the DE again.  The SE- and EE-max
problems are obtained by switching terms of the RE objective off.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .channel import ChannelModel
from .config import PhaseConstraint, SystemConfig
from .det_equiv import DEState, de_fixed_point
from .exceptions import SolverError
from .metrics import PowerAllocation, ergodic_se_mc, metric_report, total_power, re_metric
from .phase_opt import (NSPSchedule, PhaseVector, build_A, f5_value, initial_phase,
                        snap_to_set, wmmse_bcd)
from .power_alloc import quadratic_transform_solve

__all__ = ["Mode", "TraceRow", "SolveReport", "AOError", "SweepPoint",
           "solve", "baseline", "sweep", "BASELINES"]

BASELINES = ("identity_phi_opt_power", "identity_phi_equal_power")


@dataclass(frozen=True)
class Mode:
    """Objective selector: ``"re"`` (optionally with its own beta), ``"ee"`` or ``"se"``."""

    kind: str = "re"
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in ("re", "ee", "se"):
            raise ValueError(f"unknown mode {self.kind!r}")

    @classmethod
    def re(cls, beta: float | None = None) -> "Mode":
        return cls("re", beta)

    @classmethod
    def ee(cls) -> "Mode":
        return cls("ee")

    @classmethod
    def se(cls) -> "Mode":
        return cls("se")

    def report_config(self, cfg: SystemConfig) -> SystemConfig:
        """Configuration used for reported metrics (physical power model)."""
        if self.kind == "ee":
            return cfg.replace(beta=0.0)
        if self.kind == "re" and self.beta is not None:
            return cfg.replace(beta=float(self.beta))
        return cfg

    def objective_config(self, cfg: SystemConfig) -> SystemConfig:
        """Configuration whose RE is the optimised objective."""
        rep = self.report_config(cfg)
        if self.kind == "se":
            return rep.replace(xi=(0.0,) * cfg.K)
        return rep

    def __str__(self):
        return self.kind if self.beta is None else f"{self.kind}(beta={self.beta:g})"


@dataclass(frozen=True)
class TraceRow:
    se_de: float
    se_mc: float   # nan unless MC validation was requested for this iterate
    ee: float
    re: float
    objective: float
    f3: float
    f5: float


@dataclass(eq=False)
class SolveReport:
    alloc: PowerAllocation
    phase: PhaseVector
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    se_de: float = float("nan")
    se_mc: float = float("nan")
    ee: float = float("nan")
    re: float = float("nan")
    p_sum: float = float("nan")

    @property
    def objective_trace(self) -> list:
        return [r.objective for r in self.trace]


class AOError(SolverError):
    """A block solver failed; ``partial`` holds the report up to the failure."""

    def __init__(self, message: str, partial: SolveReport):
        super().__init__(message)
        self.partial = partial


def _objective(cfg_obj: SystemConfig, se: float, alloc: PowerAllocation) -> float:
    return re_metric(cfg_obj, se, total_power(cfg_obj, alloc))[0]


def _finalise(report: SolveReport, model, cfg_rep, sigma2, mc_draws, seed, t0):
    report.se_de = report.trace[-1].se_de if report.trace else float("nan")
    se = report.se_de
    if mc_draws:
        report.se_mc = ergodic_se_mc(model, report.phase.phi, report.alloc, sigma2, mc_draws, seed)
        se = report.se_mc
    m = metric_report(cfg_rep, se, report.alloc)
    report.ee, report.re, report.p_sum = m.ee, m.re, m.p_sum
    report.wall_time = time.perf_counter() - t0
    return report


def _phase_block(model, psi, sigma2, constraint, phase, dps_relax, **bcd):
    """WMMSE/BCD phase update.

    For DPS the BCD cannot leave a vertex at which the gradient lies in the
    normal cone of the polygon hull, which is typical of the initial point.
    With ``dps_relax`` a second candidate is built by running the BCD over
    the continuous set, snapping to the discrete levels and refining; the
    candidate with the larger f5 is kept.
    """
    res = wmmse_bcd(model, psi, sigma2, constraint, phase, **bcd)
    if not (dps_relax and constraint.is_discrete):
        return res
    cps = PhaseConstraint.cps()
    relaxed = wmmse_bcd(model, psi, sigma2, cps, PhaseVector(phase.phi, cps), **bcd)
    alt = wmmse_bcd(model, psi, sigma2, constraint,
                    snap_to_set(relaxed.phase.phi, constraint), **bcd)
    return alt if alt.f5_trace[-1] > res.f5_trace[-1] else res


def solve(model: ChannelModel, cfg: SystemConfig, mode: Mode = Mode(), seed: int = 0,
          eps: float = 1e-4, max_outer: int = 50, mc_draws: int = 0,
          mc_every_iter: bool = False, update_phase: bool = True,
          update_power: bool = True, init_alloc: PowerAllocation | None = None,
          inner: str = "gemm", schedule: NSPSchedule = NSPSchedule(),
          bcd_eps: float = 1e-4, bcd_max_iter: int = 100,
          de_eps: float = 1e-9, de_max_iter: int = 500,
          dps_relax: bool = True) -> SolveReport:
    """Alternating maximisation of the mode objective.

    Starts from equal power with full budgets and every phase at the set
    member nearest to 1, and stops when the relative change of the objective
    is at most ``eps`` or after ``max_outer`` iterations.  A block update
    that lowers the DE objective is discarded, so the objective trace never
    decreases.  ``dps_relax`` enables the continuous-relaxation candidate
    in DPS phase updates (see ``_phase_block``).  ``mc_draws > 0`` adds MC validation of the final iterate
    (and of every iterate with ``mc_every_iter``) using ``seed``.
    """
    t0 = time.perf_counter()
    cfg_obj = mode.objective_config(cfg)
    cfg_rep = mode.report_config(cfg)
    sigma2 = cfg.sigma2
    alloc = init_alloc or PowerAllocation.equal(cfg, model)
    phase = initial_phase(model.N_R, cfg.phase)
    report = SolveReport(alloc=alloc, phase=phase)

    def de(phi, a) -> DEState:
        return de_fixed_point(model, phi, a, sigma2, de_eps, de_max_iter)

    def fail(exc):
        report.alloc, report.phase, report.iterations = alloc, phase, len(report.trace)
        report.wall_time = time.perf_counter() - t0
        raise AOError(f"{type(exc).__name__}: {exc}", report) from exc

    try:
        state = de(phase.phi, alloc)
    except SolverError as exc:
        fail(exc)
    obj = _objective(cfg_obj, state.se_bits, alloc)
    for it in range(1, max_outer + 1):
        prev = obj
        try:
            f3 = float("nan")
            if update_power:
                new_alloc, qt = quadratic_transform_solve(
                    model, phase.phi, cfg_obj, state, alloc, eps=eps, return_state=True)
                f3 = qt.objective
                cand = de(phase.phi, new_alloc)
                if _objective(cfg_obj, cand.se_bits, new_alloc) >= obj:
                    alloc, state = new_alloc, cand
                    obj = _objective(cfg_obj, state.se_bits, alloc)
            f5 = f5_value(model.H1, phase.phi, build_A(model, state.psi), sigma2)
            if update_phase:
                res = _phase_block(model, state.psi, sigma2, cfg.phase, phase, dps_relax,
                                   eps=bcd_eps, max_iter=bcd_max_iter, inner=inner,
                                   schedule=schedule)
                f5 = res.f5_trace[-1]
                cand = de(res.phase.phi, alloc)
                if _objective(cfg_obj, cand.se_bits, alloc) >= obj:
                    phase, state = res.phase, cand
        except SolverError as exc:
            fail(exc)
        new_obj = _objective(cfg_obj, state.se_bits, alloc)
        se_mc = float("nan")
        if mc_draws and mc_every_iter:
            se_mc = ergodic_se_mc(model, phase.phi, alloc, sigma2, mc_draws, seed)
        m = metric_report(cfg_rep, state.se_bits, alloc)
        report.trace.append(TraceRow(state.se_bits, se_mc, m.ee, m.re, new_obj, f3, f5))
        done = abs(new_obj - prev) <= eps * abs(prev)
        obj = new_obj
        if done or not (update_phase or update_power):
            report.converged = done
            break
    report.alloc, report.phase, report.iterations = alloc, phase, len(report.trace)
    return _finalise(report, model, cfg_rep, sigma2, mc_draws, seed, t0)


def baseline(model: ChannelModel, cfg: SystemConfig, which: str, mode: Mode = Mode.se(),
             seed: int = 0, mc_draws: int = 0, eps: float = 1e-4,
             max_outer: int = 50) -> SolveReport:
    """Reference schemes with the phases fixed at the member nearest to 1.

    ``identity_phi_opt_power`` optimises the powers for ``mode``;
    ``identity_phi_equal_power`` keeps equal power with full budgets.
    """
    if which not in BASELINES:
        raise ValueError(f"unknown baseline {which!r}; choose from {BASELINES}")
    return solve(model, cfg, mode, seed=seed, eps=eps, max_outer=max_outer,
                 mc_draws=mc_draws, update_phase=False,
                 update_power=(which == "identity_phi_opt_power"))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SweepPoint:
    grid_value: float
    report: SolveReport | None
    error: str | None = None


def apply_grid_value(cfg: SystemConfig, kind: str, value) -> SystemConfig:
    """Configuration for one grid point: P_max in dBm, beta/P_tot, or DPS bits (0 = CPS)."""
    if kind == "pmax":
        return cfg.with_pmax_dbm(float(value))
    if kind == "beta":
        return cfg.with_beta_over_ptot(float(value))
    if kind == "bits":
        b = int(value)
        return cfg.with_phase(PhaseConstraint.dps(b) if b else PhaseConstraint.cps())
    raise ValueError(f"unknown grid kind {kind!r}")


def _run_point(args):
    model_factory, cfg, mode, kind, value, seed, mc_draws, kwargs = args
    pcfg = apply_grid_value(cfg, kind, value)
    pmode = Mode.re() if (kind == "beta" and mode.kind == "re") else mode
    try:
        model = model_factory(pcfg, seed)
        rep = solve(model, pcfg, pmode, seed=seed, mc_draws=mc_draws, **kwargs)
        return SweepPoint(float(value), rep)
    except AOError as exc:
        return SweepPoint(float(value), exc.partial, str(exc))
    except SolverError as exc:
        return SweepPoint(float(value), None, str(exc))


def sweep(model_factory: Callable[[SystemConfig, int], ChannelModel], cfg: SystemConfig,
          mode: Mode, grid: Sequence, kind: str = "pmax", seed: int = 0,
          mc_draws: int = 1000, jobs: int = 1, **solve_kwargs) -> list:
    """Solve every grid point with the same channel seed.

    Failed points are recorded with their error message and the sweep
    continues.  With ``jobs > 1`` points run in worker processes (the model
    factory must be picklable); results come back in grid order.
    """
    if len(grid) == 0:
        raise ValueError("empty grid")
    tasks = [(model_factory, cfg, mode, kind, v, seed, mc_draws, solve_kwargs) for v in grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_point, tasks))
    return [_run_point(t) for t in tasks]
