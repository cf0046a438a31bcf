# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled phase-update inner loops (see ``_kernels_py`` for the reference)."""

import numpy as np

cimport cython
from libc.math cimport atan2, cos, floor, hypot, sin, sqrt, M_PI

from .exceptions import BacktrackingError

DEF MAX_DOUBLINGS = 60


cdef inline double complex _proj1(double complex z, int tau, double ch, double sh,
                                  const double complex[::1] rots) noexcept nogil:
    cdef double mag, re, im
    cdef long n, m
    cdef double complex r, zt
    if tau == 0:
        mag = hypot(z.real, z.imag)
        if mag > 1.0:
            return z / mag
        return z
    n = <long> floor((atan2(z.imag, z.real) + M_PI / tau) / (2.0 * M_PI / tau))
    m = n % tau
    if m < 0:
        m += tau
    r = rots[m]
    zt = z * r.conjugate()
    re = zt.real
    im = zt.imag
    if re < 0.0:
        re = 0.0
    elif re > ch:
        re = ch
    if im < -sh:
        im = -sh
    elif im > sh:
        im = sh
    return r * (re + 1j * im)


cdef inline void _matvec(const double complex[:, ::1] A, const double complex[::1] x,
                         double complex[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, n = A.shape[0]
    cdef double complex acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc = acc + A[i, j] * x[j]
        out[i] = acc


cdef inline double _dist(const double complex[::1] a, const double complex[::1] b) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    cdef double complex d
    for i in range(a.shape[0]):
        d = a[i] - b[i]
        s += d.real * d.real + d.imag * d.imag
    return sqrt(s)


def _rotations(int tau):
    if tau == 0:
        return np.ones(1, dtype=complex)
    m = np.arange(tau)
    return np.cos(2.0 * np.pi * m / tau) + 1j * np.sin(2.0 * np.pi * m / tau)


def project(z, int tau):
    """Element-wise Euclidean projection onto the unit disk or the tau-gon."""
    cdef double complex[::1] zv = np.ascontiguousarray(z, dtype=complex).ravel()
    out = np.empty(zv.shape[0], dtype=complex)
    cdef double complex[::1] ov = out
    cdef const double complex[::1] rots = _rotations(tau)
    cdef double ch = cos(M_PI / tau) if tau else 0.0
    cdef double sh = sin(M_PI / tau) if tau else 0.0
    cdef Py_ssize_t i
    for i in range(zv.shape[0]):
        ov[i] = _proj1(zv[i], tau, ch, sh, rots)
    return out.reshape(np.shape(z))


cdef double _step(const double complex[:, ::1] Mh, const double complex[::1] cc,
                  const double complex[::1] z, const double complex[::1] anchor,
                  double lam, double beta, int tau, double ch, double sh,
                  const double complex[::1] rots, double complex[::1] grad,
                  double complex[::1] x, double complex[::1] d,
                  double complex[::1] Md) except -1.0:
    """Backtracked projected-gradient step; writes the point into ``x``."""
    cdef Py_ssize_t i, n = z.shape[0]
    cdef int k
    cdef double b, quad, nd
    _matvec(Mh, z, grad)
    for i in range(n):
        grad[i] = 2.0 * grad[i] - 2.0 * cc[i] - 2.0 * lam * anchor[i]
    b = 0.5 * beta
    for k in range(MAX_DOUBLINGS + 1):
        for i in range(n):
            x[i] = _proj1(z[i] - grad[i] / b, tau, ch, sh, rots)
            d[i] = x[i] - z[i]
        _matvec(Mh, d, Md)
        quad = 0.0
        nd = 0.0
        for i in range(n):
            quad += d[i].real * Md[i].real + d[i].imag * Md[i].imag
            nd += d[i].real * d[i].real + d[i].imag * d[i].imag
        if quad <= 0.5 * b * nd:
            return b
        b *= 2.0
    raise BacktrackingError(f"no sufficient descent after {MAX_DOUBLINGS} doublings")


def gemm_homotopy(Mh, c, phi0, int tau, int J, double c_mult, double lam0,
                  double lam_upp, double eps, double beta0):
    """Penalty homotopy with one extrapolated gradient step per majorisation."""
    cdef const double complex[:, ::1] M = np.ascontiguousarray(Mh, dtype=complex)
    cdef const double complex[::1] cc = np.ascontiguousarray(np.conj(c), dtype=complex)
    cdef Py_ssize_t n = M.shape[0], i
    phi_arr = np.array(phi0, dtype=complex)
    cdef double complex[::1] phi = phi_arr
    cdef double complex[::1] prev = phi_arr.copy()
    cdef double complex[::1] z = np.empty(n, dtype=complex)
    cdef double complex[::1] x = np.empty(n, dtype=complex)
    cdef double complex[::1] grad = np.empty(n, dtype=complex)
    cdef double complex[::1] d = np.empty(n, dtype=complex)
    cdef double complex[::1] Md = np.empty(n, dtype=complex)
    cdef const double complex[::1] rots = _rotations(tau)
    cdef double ch = cos(M_PI / tau) if tau else 0.0
    cdef double sh = sin(M_PI / tau) if tau else 0.0
    cdef double lam = lam0, beta = beta0, zeta_prev = 0.0, zeta, alpha
    cdef long steps = 0
    cdef int it
    while True:
        for it in range(J):
            zeta = 0.5 * (1.0 + sqrt(1.0 + 4.0 * zeta_prev * zeta_prev))
            alpha = (zeta_prev - 1.0) / zeta
            zeta_prev = zeta
            for i in range(n):
                z[i] = phi[i] + alpha * (phi[i] - prev[i])
            beta = _step(M, cc, z, phi, lam, beta, tau, ch, sh, rots, grad, x, d, Md)
            for i in range(n):
                prev[i] = phi[i]
                phi[i] = x[i]
            steps += 1
            if _dist(phi, prev) < eps:
                lam *= c_mult
        lam *= c_mult
        if lam >= lam_upp:
            break
    return np.asarray(phi).copy(), steps, steps


def mm_homotopy(Mh, c, phi0, int tau, int J, double c_mult, double lam0,
                double lam_upp, double eps, double beta0, double inner_tol, int inner_max):
    """Same homotopy with every majorised subproblem solved by APG to convergence."""
    cdef const double complex[:, ::1] M = np.ascontiguousarray(Mh, dtype=complex)
    cdef const double complex[::1] cc = np.ascontiguousarray(np.conj(c), dtype=complex)
    cdef Py_ssize_t n = M.shape[0], i
    phi_arr = np.array(phi0, dtype=complex)
    cdef double complex[::1] phi = phi_arr
    cdef double complex[::1] prev = np.empty(n, dtype=complex)
    cdef double complex[::1] xs = np.empty(n, dtype=complex)
    cdef double complex[::1] xs_prev = np.empty(n, dtype=complex)
    cdef double complex[::1] z = np.empty(n, dtype=complex)
    cdef double complex[::1] x = np.empty(n, dtype=complex)
    cdef double complex[::1] grad = np.empty(n, dtype=complex)
    cdef double complex[::1] d = np.empty(n, dtype=complex)
    cdef double complex[::1] Md = np.empty(n, dtype=complex)
    cdef const double complex[::1] rots = _rotations(tau)
    cdef double ch = cos(M_PI / tau) if tau else 0.0
    cdef double sh = sin(M_PI / tau) if tau else 0.0
    cdef double lam = lam0, beta = beta0, zeta_prev, zeta, alpha
    cdef long steps = 0, n_grad = 0
    cdef int it, inner
    while True:
        for it in range(J):
            for i in range(n):
                xs[i] = phi[i]
                xs_prev[i] = phi[i]
            zeta_prev = 0.0
            for inner in range(inner_max):
                zeta = 0.5 * (1.0 + sqrt(1.0 + 4.0 * zeta_prev * zeta_prev))
                alpha = (zeta_prev - 1.0) / zeta
                zeta_prev = zeta
                for i in range(n):
                    z[i] = xs[i] + alpha * (xs[i] - xs_prev[i])
                beta = _step(M, cc, z, phi, lam, beta, tau, ch, sh, rots, grad, x, d, Md)
                n_grad += 1
                for i in range(n):
                    xs_prev[i] = xs[i]
                    xs[i] = x[i]
                if _dist(xs, xs_prev) <= inner_tol:
                    break
            for i in range(n):
                prev[i] = phi[i]
                phi[i] = xs[i]
            steps += 1
            if _dist(phi, prev) < eps:
                lam *= c_mult
        lam *= c_mult
        if lam >= lam_upp:
            break
    return np.asarray(phi).copy(), steps, n_grad
