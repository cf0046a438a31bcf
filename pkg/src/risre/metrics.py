"""Performance functionals: Monte-Carlo ergodic SE, consumed power, EE and RE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel, draw_h2_batch
from .config import SystemConfig

__all__ = [
    "PowerAllocation",
    "MetricReport",
    "ergodic_se_mc",
    "total_power",
    "total_budget",
    "re_metric",
    "ee_metric",
    "beta_from_alpha",
    "metric_report",
    "logdet_psd",
]

MC_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    """Per-UT eigen-powers (diagonal of Lambda_k) and eigenbases V_k.

    ``Q_k = V_k diag(lam[k]) V_k^H``.
    """

    lam: tuple
    V: tuple

    def __post_init__(self):
        lam = tuple(np.array(l, dtype=float) for l in self.lam)
        for l in lam:
            if l.ndim != 1 or np.any(l < 0) or not np.all(np.isfinite(l)):
                raise ValueError("eigen-powers must be finite, nonnegative vectors")
            l.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "V", tuple(np.asarray(v) for v in self.V))
        if len(self.lam) != len(self.V):
            raise ValueError("need one basis per UT")

    @classmethod
    def equal(cls, cfg: SystemConfig, model: ChannelModel) -> "PowerAllocation":
        """Full budget split evenly over each UT's eigen-directions."""
        lam = [np.full(n, p / n) for n, p in zip(cfg.N_k, cfg.P_max)]
        return cls(tuple(lam), model.V2)

    @classmethod
    def zeros(cls, model: ChannelModel) -> "PowerAllocation":
        return cls(tuple(np.zeros(n) for n in model.N_k), model.V2)

    def with_lam(self, lam) -> "PowerAllocation":
        return PowerAllocation(tuple(lam), self.V)

    @property
    def traces(self) -> np.ndarray:
        return np.array([l.sum() for l in self.lam])

    def Q(self, k: int) -> np.ndarray:
        V = self.V[k]
        return (V * self.lam[k][None, :]) @ V.conj().T

    def is_feasible(self, cfg: SystemConfig, tol: float = 1e-9) -> bool:
        return bool(np.all(self.traces <= np.asarray(cfg.P_max) + tol))


@dataclass(frozen=True)
class MetricReport:
    se: float    # bits/s/Hz
    ee: float    # bits/Joule
    re: float    # bits/Joule/Hz
    p_sum: float  # W


def logdet_psd(X: np.ndarray) -> np.ndarray:
    """Natural log-determinant of (a stack of) Hermitian PD matrices via Cholesky.

    On failure the argument is re-symmetrised once before giving up.
    """
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        Xs = 0.5 * (X + np.swapaxes(X.conj(), -1, -2))
        try:
            L = np.linalg.cholesky(Xs)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "log-det argument is not positive definite (numerical fault)") from None
    return 2.0 * np.sum(np.log(np.real(np.diagonal(L, axis1=-2, axis2=-1))), axis=-1)


def ergodic_se_mc(model: ChannelModel, phi: np.ndarray, alloc: PowerAllocation,
                  sigma2: float, n_draws: int, seed: int, *, return_samples: bool = False):
    """Monte-Carlo estimate of the ergodic sum SE in bits/s/Hz.

    Averages ``log2 det(I + sum_k G_k Q_k G_k^H / sigma2)`` over draws
    ``0..n_draws-1`` of the seeded channel stream.  The result depends only on
    ``seed``; chunking does not change it.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    phi = np.asarray(phi)
    bases = model.cascaded_bases(phi)
    # G_k Q_k G_k^H = (U_Gk Ht) T T^H (U_Gk Ht)^H with T = V2^H V_k sqrt(lam)
    tx = [(model.V2[k].conj().T @ alloc.V[k]) * np.sqrt(alloc.lam[k])[None, :]
          for k in range(model.K)]
    eye = np.eye(model.M)
    samples = np.empty(n_draws)
    for start in range(0, n_draws, MC_CHUNK):
        count = min(MC_CHUNK, n_draws - start)
        Ht = draw_h2_batch(model, seed, start, count)
        cov = np.broadcast_to(eye, (count, model.M, model.M)).astype(complex)
        for k in range(model.K):
            X = bases[k] @ Ht[k] @ tx[k]
            cov = cov + (X @ np.swapaxes(X.conj(), -1, -2)) / sigma2
        samples[start:start + count] = logdet_psd(cov) / math.log(2.0)
    se = float(np.sum(samples) / n_draws)
    return (se, samples) if return_samples else se


def total_power(cfg: SystemConfig, alloc: PowerAllocation) -> float:
    """Consumed power: amplifier-scaled transmit power plus static terms, in W."""
    return float(np.dot(cfg.xi, alloc.traces) + cfg.P_static)


def total_budget(cfg: SystemConfig) -> float:
    """Overall available power budget ``P_tot``."""
    return cfg.P_tot


def ee_metric(cfg: SystemConfig, se: float, p_sum: float) -> float:
    if not p_sum > 0:
        raise ValueError("consumed power must be positive")
    return cfg.W * se / p_sum


def re_metric(cfg: SystemConfig, se: float, p_sum: float) -> tuple[float, float]:
    """Resource efficiency and energy efficiency.

    Returns ``(re, ee)`` with ``re = se/p_sum + beta*se/P_tot`` in bits/J/Hz
    and ``ee = W*se/p_sum`` in bits/J.
    """
    if not p_sum > 0:
        raise ValueError("consumed power must be positive")
    return se / p_sum + cfg.beta * se / cfg.P_tot, cfg.W * se / p_sum


def beta_from_alpha(alpha: float, cfg: SystemConfig) -> float:
    """Weight beta matching the EE/SE blend ``(1-alpha)*EE + alpha*SE``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha / (1.0 - alpha) * cfg.P_tot / cfg.W


def metric_report(cfg: SystemConfig, se: float, alloc: PowerAllocation) -> MetricReport:
    p = total_power(cfg, alloc)
    re, ee = re_metric(cfg, se, p)
    return MetricReport(se=float(se), ee=ee, re=re, p_sum=p)
