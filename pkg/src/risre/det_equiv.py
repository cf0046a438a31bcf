"""Deterministic-equivalent (large-system) approximation of the ergodic SE.

The auxiliaries ``gamma_k`` (length N_R) and ``psi_k`` (length N_k) solve the
coupled fixed point

    gamma_k[m] = u_m^H (I + Psi)^{-1} u_m / sigma2,   u_m = column m of H1 diag(phi) U2[k]
    psi_k[n]   = lam_k[n] / (1 + g_k[n] lam_k[n]),   g_k = Omega_k^T gamma_k
    Psi        = sum_k H1 diag(phi) U2[k] diag(Omega_k psi_k) U2[k]^H diag(phi)^H H1^H / sigma2

and the SE approximation is

    sum_k log2 det(I + diag(g_k) Lambda_k) + log2 det(I + Psi)
        - sum_k gamma_k^T Omega_k psi_k / ln 2.

The eigen-powers are taken in the V2 eigenbasis of each UT, i.e. the
allocation is assumed to use the optimal transmit directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel
from .exceptions import SolverError
from .metrics import PowerAllocation, logdet_psd

__all__ = ["DEState", "DEConvergenceError", "de_fixed_point", "de_se", "deterministic_se",
           "psi_matrix", "gamma_from_psi"]

LN2 = math.log(2.0)
_STALL_SWEEPS = 10


class DEConvergenceError(SolverError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"DE fixed point did not converge after {iterations} sweeps "
                         f"(last residual {residual:.3e})")


@dataclass(frozen=True, eq=False)
class DEState:
    gamma: tuple      # per UT, length N_R, 1/W
    psi: tuple        # per UT, length N_k, W
    g: tuple          # per UT, diagonal of Gamma_k = Omega_k^T gamma_k
    Psi: np.ndarray   # M x M, dimensionless
    iterations: int
    residual: float
    se_bits: float = float("nan")

    def Gamma(self, k: int) -> np.ndarray:
        return np.diag(self.g[k])


def psi_matrix(bases, Omega, psi, sigma2: float) -> np.ndarray:
    M = bases[0].shape[0]
    Psi = np.zeros((M, M), dtype=complex)
    for U, Om, p in zip(bases, Omega, psi):
        Psi += (U * (Om @ p)[None, :]) @ U.conj().T
    Psi /= sigma2
    return 0.5 * (Psi + Psi.conj().T)


def gamma_from_psi(bases, Psi: np.ndarray, sigma2: float) -> list[np.ndarray]:
    M = Psi.shape[0]
    # (I + Psi)^{-1} U for all UTs in one solve
    rhs = np.concatenate(bases, axis=1)
    sol = np.linalg.solve(np.eye(M) + Psi, rhs)
    quad = np.real(np.sum(rhs.conj() * sol, axis=0)) / sigma2
    out, start = [], 0
    for U in bases:
        out.append(np.clip(quad[start:start + U.shape[1]], 0.0, None))
        start += U.shape[1]
    return out


def de_fixed_point(model: ChannelModel, phi: np.ndarray, alloc: PowerAllocation,
                   sigma2: float, eps: float = 1e-9, max_iter: int = 500) -> DEState:
    """Solve the DE fixed point by a joint (all-UT) Jacobi iteration.

    Starts from ``psi = lam`` and stops when the largest change of ``psi``
    falls below ``eps`` times the largest eigen-power.  If the residual has
    not decreased for 10 consecutive sweeps, the update is damped by
    averaging with the previous iterate.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    bases = model.cascaded_bases(phi)
    lam = [np.asarray(l, dtype=float) for l in alloc.lam]
    scale = max((float(l.max()) for l in lam if l.size), default=0.0)
    tol = eps * scale

    psi = [l.copy() for l in lam]
    best = math.inf
    stalled = 0
    damping = False
    residual = 0.0
    it = 0
    if scale > 0.0:
        for it in range(1, max_iter + 1):
            Psi = psi_matrix(bases, model.Omega, psi, sigma2)
            gamma = gamma_from_psi(bases, Psi, sigma2)
            new = [l / (1.0 + (Om.T @ gm) * l) for l, Om, gm in zip(lam, model.Omega, gamma)]
            if damping:
                new = [0.5 * (a + b) for a, b in zip(new, psi)]
            residual = max(float(np.max(np.abs(a - b))) for a, b in zip(new, psi))
            psi = new
            if residual <= tol:
                break
            if residual < best:
                best, stalled = residual, 0
            else:
                stalled += 1
                if stalled >= _STALL_SWEEPS:
                    damping, stalled = True, 0
        else:
            raise DEConvergenceError(max_iter, residual)

    Psi = psi_matrix(bases, model.Omega, psi, sigma2)
    gamma = gamma_from_psi(bases, Psi, sigma2)
    g = [Om.T @ gm for Om, gm in zip(model.Omega, gamma)]
    state = DEState(tuple(gamma), tuple(psi), tuple(g), Psi, it, residual)
    return _with_se(state, model, alloc)


def de_se(state: DEState, model: ChannelModel, alloc: PowerAllocation) -> float:
    """Deterministic-equivalent SE in bits/s/Hz for a converged state."""
    rate = 0.0
    for g, l in zip(state.g, alloc.lam):
        rate += float(np.sum(np.log1p(g * l)))
    M = state.Psi.shape[0]
    rate += float(logdet_psd(np.eye(M) + state.Psi))
    rate -= sum(float(gm @ Om @ p) for gm, Om, p in zip(state.gamma, model.Omega, state.psi))
    return rate / LN2


def _with_se(state: DEState, model: ChannelModel, alloc: PowerAllocation) -> DEState:
    object.__setattr__(state, "se_bits", de_se(state, model, alloc))
    return state


def deterministic_se(model: ChannelModel, phi: np.ndarray, alloc: PowerAllocation,
                     sigma2: float, eps: float = 1e-9) -> float:
    return de_fixed_point(model, phi, alloc, sigma2, eps).se_bits
