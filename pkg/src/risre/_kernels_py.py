"""Pure-NumPy implementation of the phase-update inner loops.

Mirrors ``_kernels.pyx`` exactly in algorithm and argument order; used when
the compiled extension is unavailable or ``RISRE_PURE_PYTHON`` is set.

All routines minimise ``phi^H Mh phi - 2 Re(phi^H conj(c)) - lam ||phi||^2``
over the per-element convex hull of the phase set, with ``tau == 0`` meaning
the unit disk (CPS) and ``tau >= 2`` the regular tau-gon (DPS).
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import BacktrackingError

MAX_DOUBLINGS = 60


def project(z: np.ndarray, tau: int) -> np.ndarray:
    """Element-wise Euclidean projection onto the unit disk or the tau-gon."""
    z = np.asarray(z, dtype=complex)
    if tau == 0:
        mag = np.abs(z)
        return np.where(mag > 1.0, z / np.where(mag > 1.0, mag, 1.0), z)
    half = math.pi / tau
    n = np.floor((np.angle(z) + half) / (2.0 * half))
    m = np.mod(n, tau)
    rot = np.cos(2.0 * math.pi * m / tau) + 1j * np.sin(2.0 * math.pi * m / tau)
    zt = z * rot.conj()
    re = np.clip(zt.real, 0.0, math.cos(half))
    im = np.clip(zt.imag, -math.sin(half), math.sin(half))
    return rot * (re + 1j * im)


def _step(Mh, cc, z, anchor, lam, beta, tau):
    """One backtracked projected-gradient step from ``z``.

    Returns the new point and the accepted curvature estimate.  For the
    quadratic majorant the sufficient-descent test reduces exactly to
    ``d^H Mh d <= beta/2 ||d||^2`` with ``d = x - z``.
    """
    grad = 2.0 * (Mh @ z) - 2.0 * cc - 2.0 * lam * anchor
    b = 0.5 * beta
    for _ in range(MAX_DOUBLINGS + 1):
        x = project(z - grad / b, tau)
        d = x - z
        if np.real(np.vdot(d, Mh @ d)) <= 0.5 * b * np.real(np.vdot(d, d)):
            return x, b
        b *= 2.0
    raise BacktrackingError(f"no sufficient descent after {MAX_DOUBLINGS} doublings")


def gemm_homotopy(Mh, c, phi0, tau, J, c_mult, lam0, lam_upp, eps, beta0):
    """Penalty homotopy with one extrapolated gradient step per majorisation.

    Returns ``(phi, n_steps, n_grad)``.
    """
    Mh = np.asarray(Mh, dtype=complex)
    cc = np.conj(np.asarray(c, dtype=complex))
    phi = np.array(phi0, dtype=complex)
    prev = phi.copy()
    lam, beta = float(lam0), float(beta0)
    zeta_prev = 0.0
    steps = 0
    while True:
        for _ in range(J):
            zeta = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * zeta_prev * zeta_prev))
            alpha = (zeta_prev - 1.0) / zeta
            zeta_prev = zeta
            z = phi + alpha * (phi - prev)
            x, beta = _step(Mh, cc, z, phi, lam, beta, tau)
            prev, phi = phi, x
            steps += 1
            if np.linalg.norm(phi - prev) < eps:
                lam *= c_mult
        lam *= c_mult
        if lam >= lam_upp:
            break
    return phi, steps, steps


def mm_homotopy(Mh, c, phi0, tau, J, c_mult, lam0, lam_upp, eps, beta0,
                inner_tol, inner_max):
    """Same homotopy, but each majorised subproblem is solved by APG to convergence.

    Returns ``(phi, n_steps, n_grad)``.
    """
    Mh = np.asarray(Mh, dtype=complex)
    cc = np.conj(np.asarray(c, dtype=complex))
    phi = np.array(phi0, dtype=complex)
    lam, beta = float(lam0), float(beta0)
    steps = n_grad = 0
    while True:
        for _ in range(J):
            x = phi.copy()
            x_prev = x.copy()
            zeta_prev = 0.0
            for _ in range(inner_max):
                zeta = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * zeta_prev * zeta_prev))
                alpha = (zeta_prev - 1.0) / zeta
                zeta_prev = zeta
                z = x + alpha * (x - x_prev)
                x_new, beta = _step(Mh, cc, z, phi, lam, beta, tau)
                n_grad += 1
                x_prev, x = x, x_new
                if np.linalg.norm(x - x_prev) <= inner_tol:
                    break
            prev, phi = phi, x
            steps += 1
            if np.linalg.norm(phi - prev) < eps:
                lam *= c_mult
        lam *= c_mult
        if lam >= lam_upp:
            break
    return phi, steps, n_grad
