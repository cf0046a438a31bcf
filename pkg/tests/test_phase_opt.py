import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risre.channel import ChannelModel, generate_channel
from risre.config import PhaseConstraint
from risre.det_equiv import de_fixed_point
from risre.metrics import PowerAllocation
from risre.phase_opt import (NSPSchedule, PhaseVector, build_A, exact_mm, f5_value, f6a_eval,
                             gradient_F, initial_phase, majorant, mse_matrix, nsp_gemm,
                             penalized_objective, project_cps, project_dps, psd_sqrt,
                             quad_objective, snap_to_set, wmmse_bcd, wmmse_closed_forms,
                             wmmse_state)

from conftest import random_psd, small_config

CPS = PhaseConstraint.cps()


def wmmse_instance(rng, n, M=4, snr=10.0):
    H1 = (rng.standard_normal((M, n)) + 1j * rng.standard_normal((M, n))) / math.sqrt(2)
    A = random_psd(rng, n, snr)
    phi = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    ws = wmmse_state(H1, phi, A, 1.0)
    return ws.B, ws.A, ws.c


def brute_force(B, A, c, pc):
    return min(f6a_eval(np.array(v), B, A, c)
               for v in itertools.product(pc.points(), repeat=B.shape[0]))


# -- building blocks ---------------------------------------------------------

def test_build_A_cases(small, rng):
    cfg, m = small
    assert np.all(build_A(m, [np.zeros(2)] * m.K) == 0)
    A = build_A(m, [rng.uniform(0, 1, 2) for _ in range(m.K)])
    assert np.allclose(A, A.conj().T) and np.min(np.linalg.eigvalsh(A)) >= -1e-10
    one = ChannelModel(m.H1, (np.eye(cfg.N_R, dtype=complex),), (np.eye(2, dtype=complex),),
                       (m.Omega[0],))
    psi = np.array([0.3, 0.7])
    assert np.allclose(build_A(one, [psi]), np.diag(m.Omega[0] @ psi))


def test_mse_matrix_cases(rng):
    H1 = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    phi = np.exp(1j * rng.uniform(0, 6, 3))
    A_sqrt = psd_sqrt(random_psd(rng, 3))
    assert np.allclose(mse_matrix(np.zeros((3, 3)), H1, phi, A_sqrt, 0.7), np.eye(3))
    G = (H1 * phi) @ A_sqrt
    U = np.linalg.inv(G).conj().T  # U^H G = I
    assert np.allclose(mse_matrix(U, H1, phi, A_sqrt, 0.0), 0, atol=1e-9)
    E = mse_matrix(rng.standard_normal((3, 3)) + 0j, H1, phi, A_sqrt, 0.5)
    assert np.allclose(E, E.conj().T) and np.min(np.linalg.eigvalsh(E)) >= -1e-10


def test_closed_forms_scalar():
    U, W = wmmse_closed_forms(np.ones((1, 1)), np.ones(1), np.ones((1, 1)), 1.0)
    assert U[0, 0] == pytest.approx(0.5) and W[0, 0] == pytest.approx(2.0)
    E = mse_matrix(U, np.ones((1, 1)), np.ones(1), np.ones((1, 1)), 1.0)
    assert E[0, 0] == pytest.approx(0.5)


def test_closed_forms_zero_signal(rng):
    H1 = rng.standard_normal((3, 4)) + 0j
    U, W = wmmse_closed_forms(H1, np.ones(4), np.zeros((4, 4)), 1.0)
    assert np.all(U == 0) and np.allclose(W, np.eye(4))
    with pytest.raises(ValueError):
        wmmse_closed_forms(H1, np.ones(4), np.zeros((4, 4)), 0.0)


def test_receiver_is_minimiser(rng):
    H1 = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    phi = np.exp(1j * rng.uniform(0, 6, 4))
    A = random_psd(rng, 4)
    A_sqrt = psd_sqrt(A)
    U, W = wmmse_closed_forms(H1, phi, A, 0.3)
    base = np.real(np.trace(W @ mse_matrix(U, H1, phi, A_sqrt, 0.3)))
    for _ in range(50):
        d = rng.standard_normal(U.shape) + 1j * rng.standard_normal(U.shape)
        d *= 1e-5 / np.linalg.norm(d)
        assert np.real(np.trace(W @ mse_matrix(U + d, H1, phi, A_sqrt, 0.3))) >= base - 1e-12


def test_f6a_examples(rng):
    assert f6a_eval(np.zeros(3), random_psd(rng, 3), random_psd(rng, 3), np.ones(3)) == 0
    assert f6a_eval(np.ones(1), np.ones((1, 1)), np.ones((1, 1)), np.zeros(1)) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [1, 3, 8])
def test_hadamard_trace_identity(rng, n):
    B, A = random_psd(rng, n), random_psd(rng, n)
    C = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    phi = np.exp(1j * rng.uniform(0, 6.3, n))
    P = np.diag(phi)
    direct = np.trace(P.conj().T @ B @ P @ A)
    assert np.vdot(phi, (B * A.T) @ phi) == pytest.approx(direct, abs=1e-10 * abs(direct))
    full = direct - np.trace(P.conj().T @ C.conj().T) - np.trace(P @ C)
    assert f6a_eval(phi, B, A, np.diag(C)) == pytest.approx(full.real, abs=1e-10 * abs(full))


def test_wmmse_state_fields(rng):
    H1 = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    ws = wmmse_state(H1, np.ones(4), random_psd(rng, 4), 0.5)
    for X in (ws.A, ws.B):
        assert np.allclose(X, X.conj().T) and np.min(np.linalg.eigvalsh(X)) >= -1e-10
    assert np.array_equal(ws.c, np.diag(ws.C))


# -- projections -------------------------------------------------------------

def test_projection_examples():
    assert project_cps(0.5j) == 0.5j
    assert project_cps(3 + 4j) == pytest.approx(0.6 + 0.8j)
    v = np.exp(1j * math.pi / 4)
    assert project_dps(v, 4) == pytest.approx(v, abs=1e-15)
    assert project_dps(1 + 0j, 4) == pytest.approx(math.cos(math.pi / 4), abs=1e-15)
    assert project_dps(1 + 0.3j, 2) == pytest.approx(0.3j, abs=1e-15)
    with pytest.raises(ValueError):
        project_dps(1.0, 1)


def test_dps_projection_matches_dense_boundary_search(rng):
    # nearest point of the square hull by dense sampling of its boundary
    verts = PhaseConstraint.dps(2).points()
    t = np.linspace(0, 1, 20001)[:, None]
    boundary = (verts[None, :] * (1 - t) + np.roll(verts, -1)[None, :] * t).ravel()
    z = 1 + 0j
    d = np.abs(boundary - z)
    assert project_dps(z, 4) == pytest.approx(boundary[np.argmin(d)], abs=1e-4)


complex_pts = st.complex_numbers(max_magnitude=5.0, allow_nan=False, allow_infinity=False)


@settings(max_examples=1000, deadline=None)
@given(complex_pts, complex_pts, st.sampled_from([0, 2, 4, 8]))
def test_projection_idempotent_nonexpansive(x, y, tau):
    P = project_cps if tau == 0 else (lambda z: project_dps(z, tau))
    px, py = P(x), P(y)
    assert abs(P(px) - px) <= 1e-12
    assert abs(px - py) <= abs(x - y) + 1e-12
    if tau == 0:
        assert abs(px) <= 1 + 1e-12


# -- gradient and majorant ---------------------------------------------------

def _fd_grad(f, z, h=1e-6):
    g = np.zeros_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        dr = (f(z + e) - f(z - e)) / (2 * h)
        di = (f(z + 1j * e) - f(z - 1j * e)) / (2 * h)
        g[i] = dr + 1j * di
    return g


@pytest.mark.parametrize("lam", [0.0, 2.5])
def test_gradient_matches_central_differences(rng, lam):
    n = 5
    Mh = random_psd(rng, n) * random_psd(rng, n).T
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    anchor = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    g = gradient_F(z, anchor, Mh, c, lam)
    fd = _fd_grad(lambda x: majorant(x, anchor, Mh, c, lam), z)
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)
    if lam == 0:
        fd0 = _fd_grad(lambda x: quad_objective(x, Mh, c), z)
        assert np.linalg.norm(gradient_F(z, anchor, Mh, c, 0.0) - fd0) <= 1e-6 * np.linalg.norm(fd0)


def test_gradient_zero_case():
    assert np.all(gradient_F(np.zeros(3), np.zeros(3), np.eye(3), np.zeros(3), 1.0) == 0)


def test_majorant_conditions(rng):
    n = 6
    Mh = random_psd(rng, n) * random_psd(rng, n).T
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    for _ in range(100):
        lam = rng.uniform(0, 10)
        x = project_cps(rng.standard_normal(n) + 1j * rng.standard_normal(n))
        a = project_cps(rng.standard_normal(n) + 1j * rng.standard_normal(n))
        f = penalized_objective(x, Mh, c, lam)
        assert majorant(x, a, Mh, c, lam) >= f - 1e-8 * max(1, abs(f))          # C1
        fa = penalized_objective(a, Mh, c, lam)
        assert majorant(a, a, Mh, c, lam) == pytest.approx(fa, abs=1e-8)         # C2
        g_true = 2 * Mh @ a - 2 * np.conj(c) - 2 * lam * a
        assert np.allclose(gradient_F(a, a, Mh, c, lam), g_true, atol=1e-8)      # C3


# -- snapping and feasibility ------------------------------------------------

def test_snap_rules():
    assert np.array_equal(snap_to_set(np.array([0, 2j]), CPS).phi, [1, 1j])
    pc = PhaseConstraint.dps(2)
    pts = pc.points()
    assert snap_to_set(np.ones(1), pc).phi[0] == pts[0]  # tie between m=0 and m=3
    z = pts[2] * 0.4 * np.exp(0.1j)
    assert snap_to_set(np.array([z]), pc).phi[0] == pts[2]


@settings(max_examples=200, deadline=None)
@given(st.lists(complex_pts, min_size=1, max_size=8), st.sampled_from([1, 2, 3]))
def test_snap_is_exact_member(zs, bits):
    pc = PhaseConstraint.dps(bits)
    out = snap_to_set(np.array(zs), pc)
    assert np.all(np.isin(out.phi, pc.points()))
    assert out.angle_residual() <= 1e-12 and out.is_feasible()


# -- NSP homotopy ------------------------------------------------------------

def test_nsp_identity_quadratic_cps():
    n = 6
    r = nsp_gemm(np.eye(n), np.eye(n), np.zeros(n), CPS, np.full(n, 0.3 + 0.1j))
    assert np.allclose(np.abs(r.phase.phi), 1.0, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_nsp_small_tau2_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pc = PhaseConstraint.dps(1)
    B, A, c = wmmse_instance(rng, 2)
    r = nsp_gemm(B, A, c, pc, initial_phase(2, pc))
    assert f6a_eval(r.phase.phi, B, A, c) == pytest.approx(brute_force(B, A, c, pc), rel=1e-12)


def test_nsp_hull_invariant_and_init_check(rng):
    pc = PhaseConstraint.dps(2)
    B, A, c = wmmse_instance(rng, 4)
    r = nsp_gemm(B, A, c, pc, np.zeros(4))
    assert np.allclose(project_dps(r.relaxed, 4), r.relaxed, atol=1e-12)
    with pytest.raises(ValueError):
        nsp_gemm(B, A, c, pc, np.full(4, 2.0))


def test_constant_objective_returns_init():
    n = 3
    z = np.zeros((n, n))
    for solver in (nsp_gemm, exact_mm):
        r = solver(z, z, np.zeros(n), CPS, np.full(n, 0.5j))
        assert np.array_equal(r.phase.phi, np.full(n, 1j)) and r.grad_evals == 0


def test_exact_mm_costs_more_gradients(rng):
    B, A, c = wmmse_instance(rng, 8)
    start = initial_phase(8, CPS)
    g = nsp_gemm(B, A, c, CPS, start)
    m = exact_mm(B, A, c, CPS, start)
    assert m.grad_evals > g.grad_evals
    fg, fm = f6a_eval(g.phase.phi, B, A, c), f6a_eval(m.phase.phi, B, A, c)
    assert fg == pytest.approx(fm, rel=0.01)


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_backtracking_failure_raises(rng):
    from risre.exceptions import BacktrackingError
    from risre.phase_opt import nsp_gemm_quadratic
    Mh = np.diag([1e300, 1.0]).astype(complex)
    with pytest.raises(BacktrackingError):
        nsp_gemm_quadratic(Mh, np.array([1e300, 1.0]), CPS, np.zeros(2),
                           NSPSchedule(J=2), backend="python")


# -- WMMSE / BCD -------------------------------------------------------------

def test_bcd_dead_channel_returns_init(small):
    cfg, m = small
    r = wmmse_bcd(m, [np.zeros(2)] * m.K, cfg.sigma2, CPS, initial_phase(cfg.N_R, CPS))
    assert r.iterations == 1 and np.array_equal(r.phase.phi, np.ones(cfg.N_R))
    assert r.f5_trace == [0.0, 0.0]


@pytest.mark.parametrize("bits", [0, 1, 2])
def test_bcd_monotone_and_feasible(default_cfg, default_model, bits):
    pc = PhaseConstraint.dps(bits) if bits else CPS
    m = default_model
    a = PowerAllocation.equal(default_cfg, m)
    phi0 = np.exp(1j * np.random.default_rng(bits).uniform(0, 6.3, default_cfg.N_R))
    start = snap_to_set(phi0, pc)
    psi = de_fixed_point(m, start.phi, a, default_cfg.sigma2).psi
    r = wmmse_bcd(m, psi, default_cfg.sigma2, pc, start, max_iter=30)
    tr = r.f5_trace
    assert all(b >= a_ - 1e-8 for a_, b in zip(tr, tr[1:]))
    assert r.phase.is_feasible()


def test_bcd_small_against_brute_force():
    # plain DPS BCD is a local method; the relaxed phase block reaches the
    # discrete optimum on most instances
    from risre.ao import _phase_block
    cfg = small_config(K=1, M=2, N_R=2)
    pc = PhaseConstraint.dps(1)
    hits = 0
    for seed in range(20):
        m = generate_channel(cfg, seed)
        a = PowerAllocation.equal(cfg, m)
        psi = de_fixed_point(m, np.ones(2), a, cfg.sigma2).psi
        A = build_A(m, psi)
        best = max(f5_value(m.H1, np.array(v), A, cfg.sigma2)
                   for v in itertools.product(pc.points(), repeat=2))
        start = initial_phase(2, pc)
        plain = wmmse_bcd(m, psi, cfg.sigma2, pc, start)
        relaxed = _phase_block(m, psi, cfg.sigma2, pc, start, True)
        assert plain.f5_trace[0] - 1e-12 <= plain.f5_trace[-1] <= best * (1 + 1e-12)
        assert relaxed.f5_trace[-1] >= plain.f5_trace[-1]
        hits += relaxed.f5_trace[-1] == pytest.approx(best, rel=1e-10)
    assert hits >= 16


def test_phase_vector_readonly():
    v = PhaseVector(np.ones(3), CPS)
    with pytest.raises(ValueError):
        v.phi[0] = 2.0
