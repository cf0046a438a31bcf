"""Transmit covariance optimisation with the DE auxiliaries held fixed.

Transmit directions are the UT-side eigenbases of the channel correlation,
so only the eigen-powers ``lam[k]`` are optimised.  With ``(gamma, psi)``
frozen the rate surrogate is separable,

    R(lam) = sum_k sum_n log2(1 + g_k[n] lam_k[n]) + const,

and the fractional objective

    f3(lam) = R / P(lam) + beta R / P_tot,   P(lam) = sum_k xi_k tr(lam_k) + P_static,

is handled by the quadratic transform: alternate the closed-form auxiliary
``y = sqrt(R)/P`` with maximisation of the concave function

    f4(lam, y) = 2 y sqrt(R) - y^2 P(lam) + beta R / P_tot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .channel import ChannelModel
from .config import SystemConfig
from .det_equiv import DEState
from .metrics import PowerAllocation, logdet_psd

__all__ = [
    "FrozenDE",
    "QTState",
    "optimal_directions",
    "optimal_y",
    "project_budget",
    "surrogate_rate",
    "rate_gradient",
    "consumed_power",
    "f3_value",
    "f4_value",
    "inner_concave_solve",
    "quadratic_transform_solve",
]

LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class FrozenDE:
    """Diagonal gains ``g_k`` (1/W) and the Lambda-independent rate constant (bits)."""

    g: tuple
    const: float = 0.0

    @classmethod
    def from_state(cls, state: DEState, model: ChannelModel) -> "FrozenDE":
        M = state.Psi.shape[0]
        const = float(logdet_psd(np.eye(M) + state.Psi))
        const -= sum(float(gm @ Om @ p) for gm, Om, p in zip(state.gamma, model.Omega, state.psi))
        # ln det(I + Psi) >= tr((I + Psi)^{-1} Psi) makes this nonnegative up to roundoff
        return cls(tuple(np.asarray(g, dtype=float) for g in state.g), max(const, 0.0) / LN2)


@dataclass(eq=False)
class QTState:
    y: float
    objective: float
    trace: list = field(default_factory=list)
    iterations: int = 0
    alloc: PowerAllocation | None = None


def optimal_directions(model: ChannelModel) -> tuple:
    """Optimal transmit eigenbases: a copy of each UT's ``V2``."""
    return tuple(np.array(V) for V in model.V2)


def optimal_y(se_bits: float, p_watts: float) -> float:
    """Closed-form quadratic-transform auxiliary ``sqrt(se)/p``."""
    if not p_watts > 0:
        raise ValueError("power must be positive")
    if se_bits < 0:
        raise ValueError("rate must be nonnegative")
    return math.sqrt(se_bits) / p_watts


def project_budget(u: np.ndarray, budget: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) <= budget}``."""
    x = np.clip(u, 0.0, None)
    if x.sum() <= budget:
        return x
    # projection onto the simplex sum(x) = budget
    s = np.sort(u)[::-1]
    css = np.cumsum(s) - budget
    idx = np.arange(1, u.size + 1)
    rho = np.nonzero(s - css / idx > 0)[0][-1]
    return np.clip(u - css[rho] / (rho + 1), 0.0, None)


def _fit_budget(lam: np.ndarray, budget: float) -> np.ndarray:
    """Shrink ``lam`` until its float sum is at most ``budget`` (roundoff guard)."""
    while lam.sum() > budget:
        lam = lam * (1.0 - 4.0 * np.finfo(float).eps)
    return lam


def surrogate_rate(ctx: FrozenDE, lam) -> float:
    return float(sum(np.sum(np.log1p(g * l)) for g, l in zip(ctx.g, lam)) / LN2 + ctx.const)


def rate_gradient(ctx: FrozenDE, lam) -> list:
    """``dR/dlam_k[n] = g_k[n] / (ln2 (1 + g_k[n] lam_k[n]))``."""
    return [g / (LN2 * (1.0 + g * l)) for g, l in zip(ctx.g, lam)]


def consumed_power(cfg: SystemConfig, lam) -> float:
    return float(sum(x * float(np.sum(l)) for x, l in zip(cfg.xi, lam)) + cfg.P_static)


def f3_value(ctx: FrozenDE, cfg: SystemConfig, lam) -> float:
    R = surrogate_rate(ctx, lam)
    return R / consumed_power(cfg, lam) + cfg.beta * R / cfg.P_tot


def f4_value(ctx: FrozenDE, cfg: SystemConfig, lam, y: float) -> float:
    R = surrogate_rate(ctx, lam)
    return (2.0 * y * math.sqrt(max(R, 0.0)) - y * y * consumed_power(cfg, lam)
            + cfg.beta * R / cfg.P_tot)


def _f4_grad(ctx, cfg, lam, y):
    R = surrogate_rate(ctx, lam)
    dR = rate_gradient(ctx, lam)
    w = (y / math.sqrt(R) if R > 0 else 0.0) + cfg.beta / cfg.P_tot
    return [w * d - y * y * x for d, x in zip(dR, cfg.xi)]


def inner_concave_solve(ctx: FrozenDE, y: float, cfg: SystemConfig, warm: PowerAllocation,
                        tol: float = 1e-6, max_steps: int = 2000) -> PowerAllocation:
    """Maximise ``f4(., y)`` over the per-UT trace budgets.

    Projected gradient ascent in the normalised coordinates
    ``u_k = lam_k / P_max,k`` with Armijo backtracking (factor 0.5, initial
    step 1).  Stops when the unit-step projected gradient has norm at most
    ``tol``.  The warm start is returned unchanged when the objective does
    not depend on the powers.
    """
    if y < 0:
        raise ValueError("y must be nonnegative")
    if y == 0 and cfg.beta == 0:
        return warm
    pmax = np.asarray(cfg.P_max, dtype=float)
    u = [np.asarray(l, dtype=float) / p for l, p in zip(warm.lam, pmax)]
    if any(s > 1.0 + 1e-12 for s in (x.sum() for x in u)):
        u = [project_budget(x) for x in u]

    def to_lam(v):
        return [_fit_budget(x * p, p) for x, p in zip(v, pmax)]

    f = f4_value(ctx, cfg, to_lam(u), y)
    for _ in range(max_steps):
        grad = [gk * p for gk, p in zip(_f4_grad(ctx, cfg, to_lam(u), y), pmax)]
        pg = [project_budget(x + gk) - x for x, gk in zip(u, grad)]
        if math.sqrt(sum(float(d @ d) for d in pg)) <= tol:
            break
        t = 1.0
        while True:
            cand = [project_budget(x + t * gk) for x, gk in zip(u, grad)]
            d = [a - b for a, b in zip(cand, u)]
            dd = sum(float(v @ v) for v in d)
            f_new = f4_value(ctx, cfg, to_lam(cand), y)
            if f_new >= f + sum(float(gk @ v) for gk, v in zip(grad, d)) - dd / (2.0 * t):
                break
            t *= 0.5
            if t < 1e-20:  # no ascent possible at machine precision
                return warm.with_lam(to_lam(u))
        u, f = cand, f_new
    return warm.with_lam(to_lam(u))


DERefresher = Union[DEState, FrozenDE, Callable[[PowerAllocation], DEState]]


def _freeze(de_refresher, model, init) -> FrozenDE:
    if isinstance(de_refresher, FrozenDE):
        return de_refresher
    state = de_refresher if isinstance(de_refresher, DEState) else de_refresher(init)
    return FrozenDE.from_state(state, model)


def quadratic_transform_solve(model: ChannelModel, phi, cfg: SystemConfig,
                              de_refresher: DERefresher, init: PowerAllocation,
                              eps: float = 1e-4, max_iter: int = 100,
                              return_state: bool = False):
    """Quadratic-transform iterations for the eigen-powers.

    ``de_refresher`` is a converged DE state at ``(phi, init)``, a prebuilt
    :class:`FrozenDE`, or a callable mapping an allocation to a DE state; the
    auxiliaries are evaluated once and held fixed.  Stops when the relative
    change of ``f3`` is at most ``eps``.  With every ``xi_k = 0`` the
    consumed power no longer depends on the allocation and one iteration is
    exact.
    """
    ctx = _freeze(de_refresher, model, init)
    alloc = init
    lam = list(alloc.lam)
    obj = f3_value(ctx, cfg, lam)
    state = QTState(y=0.0, objective=obj, trace=[obj], alloc=alloc)
    single = all(x == 0 for x in cfg.xi)
    for it in range(1, max_iter + 1):
        y = optimal_y(max(surrogate_rate(ctx, lam), 0.0), consumed_power(cfg, lam))
        alloc = inner_concave_solve(ctx, y, cfg, alloc)
        lam = list(alloc.lam)
        new = f3_value(ctx, cfg, lam)
        state.y, state.iterations, state.alloc = y, it, alloc
        state.trace.append(new)
        done = single or abs(new - obj) <= eps * abs(obj)
        obj = new
        if done:
            break
    state.objective = obj
    return (alloc, state) if return_state else alloc
