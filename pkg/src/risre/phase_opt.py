"""RIS phase optimisation: WMMSE block coordinate descent around an
NSP-penalised, gradient-extrapolated MM solver.

With the DE auxiliaries frozen, the phase subproblem maximises

    f5(phi) = log2 det(I + H1 diag(phi) A diag(phi)^H H1^H / sigma2),
    A = sum_k U2[k] diag(Omega_k psi_k) U2[k]^H.

Each BCD round fixes the MMSE receiver ``U_h`` and weight ``W_h`` in closed
form and then minimises the quadratic

    f6a(phi) = phi^H (B o A^T) phi - 2 Re(phi^H conj(c))

over the phase set.  The non-convex set is relaxed to its convex hull with a
negative square penalty ``-lam ||phi||^2`` whose weight grows until the
iterates sit on extreme points; the penalised problem is a difference of
convex quadratics handled by majorisation-minimisation with one accelerated
projected-gradient step per majorisation (``nsp_gemm``) or with every
majorised subproblem solved to convergence (``exact_mm``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .channel import ChannelModel
from .config import PhaseConstraint
from .metrics import logdet_psd

__all__ = [
    "PhaseVector",
    "NSPSchedule",
    "InnerResult",
    "WmmseResult",
    "WmmseState",
    "wmmse_state",
    "build_A",
    "psd_sqrt",
    "mse_matrix",
    "wmmse_closed_forms",
    "f5_value",
    "f6a_eval",
    "quad_objective",
    "penalized_objective",
    "majorant",
    "gradient_F",
    "project_cps",
    "project_dps",
    "project_hull",
    "snap_to_set",
    "initial_phase",
    "spectral_norm",
    "lipschitz_bound",
    "nsp_gemm",
    "exact_mm",
    "nsp_gemm_quadratic",
    "exact_mm_quadratic",
    "wmmse_bcd",
]

LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class PhaseVector:
    """RIS reflection coefficients together with their feasible set."""

    phi: np.ndarray
    constraint: PhaseConstraint

    def __post_init__(self):
        phi = np.array(self.phi, dtype=complex)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    def __len__(self):
        return self.phi.size

    def angle_residual(self) -> float:
        """Largest distance from the phase set (modulus error for CPS,
        angle error to the nearest level for DPS)."""
        if not self.constraint.is_discrete:
            return float(np.max(np.abs(np.abs(self.phi) - 1.0)))
        tau = self.constraint.tau
        m_raw = np.angle(self.phi) * tau / (2.0 * np.pi) - 0.5
        err = np.abs(m_raw - np.round(m_raw)) * 2.0 * np.pi / tau
        return float(np.max(err))

    def is_feasible(self, tol: float = 1e-12) -> bool:
        if self.constraint.is_discrete:
            pts = self.constraint.points()
            exact = np.isin(self.phi, pts)
            return bool(np.all(exact) or self.angle_residual() <= tol)
        return self.angle_residual() <= tol


@dataclass(frozen=True)
class NSPSchedule:
    """Penalty homotopy settings.

    ``lambda0_rel`` scales the initial penalty relative to the Lipschitz
    bound; ``lambda_upp`` overrides the automatic breakpoint when given.
    """

    J: int = 20
    c_mult: float = 3.0
    lambda0_rel: float = 1e-3
    lambda_upp: float | None = None


@dataclass(frozen=True, eq=False)
class InnerResult:
    phase: PhaseVector
    relaxed: np.ndarray
    steps: int
    grad_evals: int


@dataclass(frozen=True, eq=False)
class WmmseState:
    """Closed-form blocks of one BCD round; ``c`` is the diagonal of ``C``."""

    W_h: np.ndarray
    U_h: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    c: np.ndarray

    @property
    def Mh(self) -> np.ndarray:
        return self.B * self.A.T


@dataclass(frozen=True, eq=False)
class WmmseResult:
    phase: PhaseVector
    f5_trace: list
    iterations: int
    grad_evals: int
    converged: bool


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def build_A(model: ChannelModel, psi) -> np.ndarray:
    """``sum_k U2[k] diag(Omega_k psi_k) U2[k]^H``."""
    A = np.zeros((model.N_R, model.N_R), dtype=complex)
    for U, Om, p in zip(model.U2, model.Omega, psi):
        A += (U * (Om @ np.asarray(p))[None, :]) @ U.conj().T
    return 0.5 * (A + A.conj().T)


def psd_sqrt(A: np.ndarray) -> np.ndarray:
    """Hermitian square root; negative round-off eigenvalues are clipped."""
    w, V = np.linalg.eigh(0.5 * (A + A.conj().T))
    return (V * np.sqrt(np.clip(w, 0.0, None))[None, :]) @ V.conj().T


def mse_matrix(U_h, H1, phi, A_sqrt, sigma2: float) -> np.ndarray:
    """MSE matrix of the hypothetical link with beamformer diag(phi) A^{1/2}."""
    D = U_h.conj().T @ (H1 * np.asarray(phi)[None, :]) @ A_sqrt - np.eye(A_sqrt.shape[0])
    E = D @ D.conj().T + sigma2 * (U_h.conj().T @ U_h)
    return 0.5 * (E + E.conj().T)


def wmmse_closed_forms(H1, phi, A, sigma2: float, A_sqrt=None):
    """Optimal MMSE receiver and weight ``(U_h, W_h)`` for fixed phases."""
    if not sigma2 > 0:
        raise ValueError("noise power must be positive")
    if A_sqrt is None:
        A_sqrt = psd_sqrt(A)
    G = H1 * np.asarray(phi)[None, :]
    R = sigma2 * np.eye(H1.shape[0]) + G @ A @ G.conj().T
    U_h = np.linalg.solve(0.5 * (R + R.conj().T), G @ A_sqrt)
    E = mse_matrix(U_h, H1, phi, A_sqrt, sigma2)
    W_h = np.linalg.inv(E)
    return U_h, 0.5 * (W_h + W_h.conj().T)


def f5_value(H1, phi, A, sigma2: float) -> float:
    """``log2 det(I + H1 diag(phi) A diag(phi)^H H1^H / sigma2)``."""
    G = H1 * np.asarray(phi)[None, :]
    X = np.eye(H1.shape[0]) + (G @ A @ G.conj().T) / sigma2
    return float(logdet_psd(0.5 * (X + X.conj().T))) / LN2


def quad_objective(phi, Mh, c) -> float:
    phi = np.asarray(phi)
    return float(np.real(np.vdot(phi, Mh @ phi)) - 2.0 * np.real(np.vdot(phi, np.conj(c))))


def f6a_eval(phi, B, A, c) -> float:
    """``phi^H (B o A^T) phi - 2 Re(phi^H conj(c))``."""
    return quad_objective(phi, B * A.T, c)


def penalized_objective(phi, Mh, c, lam: float) -> float:
    phi = np.asarray(phi)
    return quad_objective(phi, Mh, c) - lam * float(np.real(np.vdot(phi, phi)))


def majorant(phi, anchor, Mh, c, lam: float) -> float:
    """Upper bound of the penalised objective, tight at ``anchor``."""
    phi, anchor = np.asarray(phi), np.asarray(anchor)
    lin = np.real(np.vdot(anchor, anchor)) + 2.0 * np.real(np.vdot(anchor, phi - anchor))
    return quad_objective(phi, Mh, c) - lam * float(lin)


def gradient_F(z, phi_anchor, Mh, c, lam: float) -> np.ndarray:
    """Gradient (d/dRe + j d/dIm) of the majorant at ``z``."""
    return 2.0 * (Mh @ np.asarray(z)) - 2.0 * np.conj(c) - 2.0 * lam * np.asarray(phi_anchor)


def project_cps(z):
    """Projection onto the closed unit disk (element-wise)."""
    out = _backend.kernels.project(np.atleast_1d(np.asarray(z, dtype=complex)), 0)
    return out if np.ndim(z) else complex(out[0])


def project_dps(z, tau: int):
    """Projection onto the regular tau-gon spanned by the DPS levels."""
    if tau < 2:
        raise ValueError("tau must be >= 2")
    out = _backend.kernels.project(np.atleast_1d(np.asarray(z, dtype=complex)), int(tau))
    return out if np.ndim(z) else complex(out[0])


def project_hull(z, constraint: PhaseConstraint):
    return project_dps(z, constraint.tau) if constraint.is_discrete else project_cps(z)


def snap_to_set(phi, constraint: PhaseConstraint) -> PhaseVector:
    """Nearest member of the phase set, element-wise.

    CPS maps 0 to 1; DPS breaks ties towards the smaller level index.
    """
    phi = np.asarray(phi, dtype=complex)
    if not constraint.is_discrete:
        mag = np.abs(phi)
        out = np.where(mag > 0, phi / np.where(mag > 0, mag, 1.0), 1.0 + 0j)
        return PhaseVector(out, constraint)
    tau = constraint.tau
    m_raw = np.angle(phi) * tau / (2.0 * np.pi) - 0.5
    lo = np.floor(m_raw)
    d_lo, d_hi = m_raw - lo, lo + 1.0 - m_raw
    lo_i, hi_i = np.mod(lo, tau).astype(int), np.mod(lo + 1.0, tau).astype(int)
    m = np.where(d_lo < d_hi, lo_i, np.where(d_hi < d_lo, hi_i, np.minimum(lo_i, hi_i)))
    return PhaseVector(constraint.points()[m], constraint)


def initial_phase(n: int, constraint: PhaseConstraint) -> PhaseVector:
    """All coefficients at the set member nearest to 1."""
    return snap_to_set(np.ones(n, dtype=complex), constraint)


def spectral_norm(Mh: np.ndarray, steps: int = 50) -> float:
    """Largest singular value of a Hermitian PSD matrix by power iteration."""
    n = Mh.shape[0]
    v = np.ones(n, dtype=complex) / math.sqrt(n)
    est = 0.0
    for _ in range(steps):
        w = Mh @ v
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def lipschitz_bound(Mh: np.ndarray, c: np.ndarray) -> tuple[float, float]:
    """Lipschitz bound of f6a over the hull and the spectral norm of ``Mh``."""
    norm_m = spectral_norm(Mh)
    return 2.0 * norm_m * math.sqrt(Mh.shape[0]) + 2.0 * float(np.linalg.norm(c)), norm_m


def _homotopy_setup(Mh, c, constraint, schedule):
    L, norm_m = lipschitz_bound(Mh, c)
    if L == 0.0:
        return None
    if schedule.lambda_upp is not None:
        lam_upp = schedule.lambda_upp
    elif constraint.is_discrete:
        lam_upp = L / math.sin(math.pi / constraint.tau)
    else:
        lam_upp = L
    beta0 = 2.0 * norm_m if norm_m > 0 else L
    return schedule.lambda0_rel * L, lam_upp, beta0


def _check_init(phi, constraint):
    phi = np.array(phi.phi if isinstance(phi, PhaseVector) else phi, dtype=complex)
    proj = project_hull(phi, constraint)
    if np.max(np.abs(proj - phi), initial=0.0) > 1e-9:
        raise ValueError("initial phase vector must lie in the convex hull of the phase set")
    return proj


def nsp_gemm_quadratic(Mh, c, constraint: PhaseConstraint, init_phi,
                       schedule: NSPSchedule = NSPSchedule(), eps: float = 1e-4,
                       backend: str | None = None) -> InnerResult:
    """NSP homotopy with one-step APG per majorisation on ``(Mh, c)`` directly."""
    Mh = np.ascontiguousarray(Mh, dtype=complex)
    c = np.ascontiguousarray(c, dtype=complex)
    phi0 = _check_init(init_phi, constraint)
    setup = _homotopy_setup(Mh, c, constraint, schedule)
    if setup is None:  # constant objective
        return InnerResult(snap_to_set(phi0, constraint), phi0, 0, 0)
    lam0, lam_upp, beta0 = setup
    kern = _backend.get(backend)
    relaxed, steps, n_grad = kern.gemm_homotopy(
        Mh, c, phi0, constraint.tau, schedule.J, schedule.c_mult,
        lam0, lam_upp, eps, beta0)
    return InnerResult(snap_to_set(relaxed, constraint), relaxed, int(steps), int(n_grad))


def exact_mm_quadratic(Mh, c, constraint: PhaseConstraint, init_phi,
                       schedule: NSPSchedule = NSPSchedule(), eps: float = 1e-4,
                       inner_tol: float | None = None, inner_max: int = 500,
                       backend: str | None = None) -> InnerResult:
    """NSP homotopy with each majorised subproblem solved by APG to convergence."""
    Mh = np.ascontiguousarray(Mh, dtype=complex)
    c = np.ascontiguousarray(c, dtype=complex)
    phi0 = _check_init(init_phi, constraint)
    setup = _homotopy_setup(Mh, c, constraint, schedule)
    if setup is None:
        return InnerResult(snap_to_set(phi0, constraint), phi0, 0, 0)
    lam0, lam_upp, beta0 = setup
    tol = 1e-2 * eps if inner_tol is None else inner_tol
    kern = _backend.get(backend)
    relaxed, steps, n_grad = kern.mm_homotopy(
        Mh, c, phi0, constraint.tau, schedule.J, schedule.c_mult,
        lam0, lam_upp, eps, beta0, tol, inner_max)
    return InnerResult(snap_to_set(relaxed, constraint), relaxed, int(steps), int(n_grad))


def nsp_gemm(B, A, c, constraint: PhaseConstraint, init_phi,
             schedule: NSPSchedule = NSPSchedule(), eps: float = 1e-4,
             backend: str | None = None) -> InnerResult:
    """Minimise f6a over the phase set with the NSP-penalised GEMM method."""
    return nsp_gemm_quadratic(np.asarray(B) * np.asarray(A).T, c, constraint, init_phi,
                              schedule, eps, backend)


def exact_mm(B, A, c, constraint: PhaseConstraint, init_phi,
             schedule: NSPSchedule = NSPSchedule(), eps: float = 1e-4,
             inner_tol: float | None = None, inner_max: int = 500,
             backend: str | None = None) -> InnerResult:
    """Reference solver: like :func:`nsp_gemm` but with exact MM subproblems."""
    return exact_mm_quadratic(np.asarray(B) * np.asarray(A).T, c, constraint, init_phi,
                              schedule, eps, inner_tol, inner_max, backend)


# ---------------------------------------------------------------------------
# WMMSE / BCD
# ---------------------------------------------------------------------------

def wmmse_state(H1, phi, A, sigma2: float, A_sqrt=None) -> WmmseState:
    """Receiver, weight and the quadratic-form data of f6a at ``phi``."""
    if A_sqrt is None:
        A_sqrt = psd_sqrt(A)
    U_h, W_h = wmmse_closed_forms(H1, phi, A, sigma2, A_sqrt)
    HU = H1.conj().T @ U_h
    B = HU @ W_h @ HU.conj().T
    C = A_sqrt @ W_h @ HU.conj().T
    return WmmseState(W_h, U_h, A, 0.5 * (B + B.conj().T), C, np.diag(C).copy())


def wmmse_bcd(model: ChannelModel, psi, sigma2: float, constraint: PhaseConstraint,
              init_phi, eps: float = 1e-4, max_iter: int = 100, inner: str = "gemm",
              schedule: NSPSchedule = NSPSchedule(), inner_eps: float = 1e-4,
              backend: str | None = None) -> WmmseResult:
    """Iterative WMMSE maximisation of f5 over the phase set.

    Stops when the relative change of f5 is at most ``eps`` or after
    ``max_iter`` rounds.  A phase update that does not lower f6a relative to
    the current (feasible) phases is discarded, which keeps the f5 trace
    non-decreasing.
    """
    if inner not in ("gemm", "mm"):
        raise ValueError("inner must be 'gemm' or 'mm'")
    solve = nsp_gemm_quadratic if inner == "gemm" else exact_mm_quadratic
    H1 = model.H1
    A = build_A(model, psi)
    A_sqrt = psd_sqrt(A)
    phi = np.array(init_phi.phi if isinstance(init_phi, PhaseVector) else init_phi,
                   dtype=complex)
    f_prev = f5_value(H1, phi, A, sigma2)
    trace = [f_prev]
    grad_evals = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        st = wmmse_state(H1, phi, A, sigma2, A_sqrt)
        Mh, c = st.Mh, st.c
        res = solve(Mh, c, constraint, phi, schedule, inner_eps, backend=backend)
        grad_evals += res.grad_evals
        cand = np.array(res.phase.phi)
        if quad_objective(cand, Mh, c) > quad_objective(phi, Mh, c):
            cand = phi
        f_new = f5_value(H1, cand, A, sigma2)
        trace.append(f_new)
        phi = cand
        if abs(f_new - f_prev) <= eps * abs(f_prev):
            converged = True
            break
        f_prev = f_new
    return WmmseResult(PhaseVector(phi, constraint), trace, it, grad_evals, converged)
