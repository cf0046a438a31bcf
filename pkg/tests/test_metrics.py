import math

import numpy as np
import pytest
from scipy import integrate

from risre.channel import generate_channel
from risre.config import PhaseConstraint, default_config
from risre.metrics import (PowerAllocation, beta_from_alpha, ee_metric, ergodic_se_mc,
                           logdet_psd, metric_report, re_metric, total_power)

from conftest import scalar_model, small_config

# E[log2(1 + |h|^2)] for unit-variance complex Gaussian h, i.e. e*E1(1)/ln2
SCALAR_ERGODIC = 0.8603473822708859


def test_scalar_oracle_frozen_value():
    val = integrate.quad(lambda x: math.log2(1 + x) * math.exp(-x), 0, math.inf,
                         epsabs=1e-14, epsrel=1e-13)[0]
    assert val == pytest.approx(SCALAR_ERGODIC, abs=1e-12)


def test_scalar_mc_matches_oracle():
    m = scalar_model()
    alloc = PowerAllocation((np.ones(1),), (np.eye(1),))
    se, samples = ergodic_se_mc(m, np.ones(1), alloc, 1.0, 1_000_000, 0, return_samples=True)
    stderr = samples.std() / math.sqrt(samples.size)
    assert abs(se - SCALAR_ERGODIC) <= 4 * stderr


def test_zero_power_and_dead_channel(small):
    cfg, m = small
    phi = np.ones(cfg.N_R)
    assert ergodic_se_mc(m, phi, PowerAllocation.zeros(m), cfg.sigma2, 50, 0) == 0.0
    dead = m.with_omega(tuple(np.zeros_like(o) for o in m.Omega))
    assert ergodic_se_mc(dead, phi, PowerAllocation.equal(cfg, dead), cfg.sigma2, 50, 0) == 0.0


def test_mc_deterministic_and_chunk_independent(small):
    cfg, m = small
    phi = np.exp(1j * np.arange(cfg.N_R))
    a = PowerAllocation.equal(cfg, m)
    s1, x1 = ergodic_se_mc(m, phi, a, cfg.sigma2, 5000, 4, return_samples=True)
    s2, x2 = ergodic_se_mc(m, phi, a, cfg.sigma2, 300, 4, return_samples=True)
    assert np.array_equal(x1[:300], x2)
    assert s1 == ergodic_se_mc(m, phi, a, cfg.sigma2, 5000, 4)


def test_mc_monotone_in_eigen_power(small):
    cfg, m = small
    phi = np.ones(cfg.N_R)
    base = PowerAllocation.equal(cfg, m)
    se0 = ergodic_se_mc(m, phi, base, cfg.sigma2, 400, 1)
    for k in range(m.K):
        for n in range(cfg.N_k[k]):
            lam = [l.copy() for l in base.lam]
            lam[k][n] *= 1.5
            assert ergodic_se_mc(m, phi, base.with_lam(lam), cfg.sigma2, 400, 1) >= se0


def test_mc_variance_scaling(small):
    cfg, m = small
    a = PowerAllocation.equal(cfg, m)
    phi = np.ones(cfg.N_R)
    est = {n: [ergodic_se_mc(m, phi, a, cfg.sigma2, n, s) for s in range(50)] for n in (20, 40)}
    ratio = np.var(est[20]) / np.var(est[40])
    assert 1.2 <= ratio <= 3.5


def test_total_power_default_example():
    cfg = default_config(20.0, PhaseConstraint.dps(2))
    m = generate_channel(cfg, 0)
    a = PowerAllocation(tuple(np.array([0.05, 0.05]) for _ in range(4)), m.V2)
    assert total_power(cfg, a) == pytest.approx(10.32854453183003, rel=1e-12)
    doubled = a.with_lam([2 * l for l in a.lam])
    assert total_power(cfg, doubled) - total_power(cfg, a) == pytest.approx(4 * 0.1 / 0.3, rel=1e-12)


def test_total_power_all_zero():
    cfg = small_config(K=1)
    m = generate_channel(cfg, 0)
    # static terms are positive by construction; zero transmit power leaves only them
    assert total_power(cfg, PowerAllocation.zeros(m)) == pytest.approx(cfg.P_static)


def test_re_examples():
    cfg = default_config().replace(beta=1.0)
    cfg = cfg.replace(P_BS=cfg.P_BS + 20.0 - cfg.P_tot)  # make P_tot exactly 20 W
    assert cfg.P_tot == pytest.approx(20.0)
    re, ee = re_metric(cfg, 8.0, 10.0)
    assert re == pytest.approx(1.2)
    assert ee == pytest.approx(cfg.W * 0.8)
    cfg0 = default_config()
    assert re_metric(cfg0, 8.0, 10.0)[0] == ee_metric(cfg0, 8.0, 10.0) / cfg0.W
    assert re_metric(cfg, 0.0, 3.0)[0] == 0.0
    with pytest.raises(ValueError):
        re_metric(cfg, 1.0, 0.0)


def test_beta_from_alpha():
    cfg = default_config()
    cfg_w = cfg.replace(W=cfg.P_tot)
    assert beta_from_alpha(0.5, cfg_w) == pytest.approx(1.0)
    cfg3 = cfg.replace(W=cfg.P_tot / 3.0)
    assert beta_from_alpha(2 / 3, cfg3) == pytest.approx(6.0)
    assert beta_from_alpha(1e-9, cfg) < 1e-6
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            beta_from_alpha(bad, cfg)


def test_metric_report_consistency(small):
    cfg, m = small
    a = PowerAllocation.equal(cfg, m)
    r = metric_report(cfg, 5.0, a)
    assert r.ee == pytest.approx(cfg.W * r.se / r.p_sum)


def test_allocation_validation(small):
    cfg, m = small
    with pytest.raises(ValueError):
        PowerAllocation((np.array([-1.0, 1.0]), np.ones(2)), m.V2)
    a = PowerAllocation.equal(cfg, m)
    assert a.is_feasible(cfg)
    Q = a.Q(0)
    assert np.allclose(Q, Q.conj().T) and np.min(np.linalg.eigvalsh(Q)) >= -1e-12


def test_logdet_fallback_and_failure():
    X = np.array([[2.0, 1.0 + 1e-17j], [1.0, 2.0]])
    assert logdet_psd(X) == pytest.approx(math.log(3.0))
    with pytest.raises(np.linalg.LinAlgError):
        logdet_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))
