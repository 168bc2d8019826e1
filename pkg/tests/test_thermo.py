import itertools

import numpy as np
import pytest

from pfc_lab import thermo
from pfc_lab.ising import PfcParams, build_pfc


def gibbs_oracle(params, beta):
    """Exhaustive Gibbs sums with itertools; returns ln Z, subsystem and average magnetization."""
    prob = build_pfc(params)
    M = params.M
    logw, mags = [], []
    for cfg in itertools.product([1, -1], repeat=2 * M):
        e = sum(v * cfg[i] for i, v in prob.h.items())
        e += sum(v * cfg[i] * cfg[j] for (i, j), v in prob.J.items())
        logw.append(-beta * e)
        mags.append([0.5 * (cfg[i] + cfg[M + i]) for i in range(M)])
    logw = np.array(logw)
    mags = np.array(mags)
    top = logw.max()
    w = np.exp(logw - top)
    lnZ = top + np.log(w.sum())
    sub = (w @ mags) / w.sum()
    return lnZ, sub, sub.mean()


def test_transfer_pair_entries():
    tp = thermo.transfer_pair(PfcParams(3, 1.0, 0.1), 1.0)
    assert tp.W[0, 0] == pytest.approx(np.exp(2.1))
    assert tp.W[0, 0] == pytest.approx(8.1662, abs=1e-4)
    assert tp.v[0] == pytest.approx(1.7333, abs=1e-4)
    assert np.array_equal(tp.W[2], tp.W[3])
    assert np.all(tp.W > 0) and np.all(tp.v > 0)
    assert np.linalg.matrix_rank(tp.W) <= 3


def test_small_beta_limits():
    p = PfcParams(4, 1.0, 0.3)
    tp = thermo.transfer_pair(p, 1e-12)
    assert np.allclose(tp.W, 1.0) and np.allclose(tp.v, 1.0)
    assert thermo.partition_function(p, 1e-12) == pytest.approx(4 ** 4)
    assert abs(thermo.average_magnetization(p, 1e-9)) < 1e-8
    assert thermo.lambda1(p, 1e-9) == pytest.approx(4.0, rel=1e-6)


@pytest.mark.parametrize("M,R,d,beta", [(2, 1.0, 0.1, 1.0), (5, 1.0, 0.2, 2.0)])
def test_partition_against_oracle(M, R, d, beta):
    p = PfcParams(M, R, d)
    lnZ, _, _ = gibbs_oracle(p, beta)
    assert thermo.partition_function(p, beta) == pytest.approx(np.exp(lnZ), rel=1e-10)


ORACLE_GRID = [(M, b, d, R) for M in (2, 3, 4, 5) for b in (0.1, 1.0, 4.0)
               for d in (0.05, 0.3, 0.9) for R in (0.5, 1.0)]


@pytest.mark.parametrize("M,beta,d,R", ORACLE_GRID)
def test_oracle_equivalence(M, beta, d, R):
    p = PfcParams(M, R, d)
    lnZ, sub, avg = gibbs_oracle(p, beta)
    assert thermo.log_partition_function(p, beta) == pytest.approx(lnZ, rel=1e-10)
    assert thermo.partition_function(p, beta) == pytest.approx(np.exp(lnZ), rel=1e-10)
    for i in range(1, M + 1):
        assert abs(thermo.subsystem_magnetization(p, beta, i) - sub[i - 1]) <= 1e-10
    assert abs(thermo.average_magnetization(p, beta) - avg) <= 1e-10


def test_subsystem_mag_examples():
    p = PfcParams(3, 1.0, 0.1)
    _, sub, _ = gibbs_oracle(p, 1.0)
    assert thermo.subsystem_magnetization(p, 1.0, 2) == pytest.approx(sub[1], abs=1e-10)
    assert thermo.subsystem_magnetization(p, 200.0, 2) == pytest.approx(1.0, abs=1e-10)
    assert abs(thermo.subsystem_magnetization(p, 1e-9, 1)) < 1e-8
    assert thermo.brute_subsystem_magnetization(p, 1.0, 2) == pytest.approx(sub[1], abs=1e-12)
    with pytest.raises(IndexError):
        thermo.subsystem_magnetization(p, 1.0, 4)


def test_average_mag_examples():
    p = PfcParams(4, 1.0, 0.15)
    _, _, avg = gibbs_oracle(p, 1.5)
    assert thermo.average_magnetization(p, 1.5) == pytest.approx(avg, abs=1e-10)
    p2 = PfcParams(2, 1.0, 0.3)
    m = [thermo.subsystem_magnetization(p2, 0.7, i) for i in (1, 2)]
    assert thermo.average_magnetization(p2, 0.7) == pytest.approx(np.mean(m))
    assert thermo.average_magnetization(PfcParams(3, 1.0, 0.1), 300.0) == pytest.approx(1.0)


def test_log_domain_large_beta():
    p = PfcParams(6, 1.0, 0.1)
    beta = 500.0
    lz = thermo.partition_function(p, beta, log=True)
    # ground state dominates: ln Z ~ -beta E0
    e0 = -(6 * 1.1 + 5)
    assert lz == pytest.approx(-beta * e0, rel=1e-12)
    with pytest.raises(thermo.Overflow):
        thermo.partition_function(p, beta)
    assert np.isfinite(thermo.free_energy(p, beta))


def test_log_domain_switch_is_seamless():
    p = PfcParams(4, 1.0, 0.2)
    for beta in (29.9, 30.1, 40.0):
        assert np.log(thermo.partition_function(p, beta)) == pytest.approx(
            thermo.brute_log_partition(p, beta), rel=1e-10)


SWEEP = [(R, d, b) for R in (0.5, 1.0) for d in (0.05, 0.1, 0.3, 0.5, 0.9)
         for b in (0.01, 0.1, 1.0, 3.0, 4.0, 10.0)]


@pytest.mark.parametrize("R,d,beta", SWEEP)
def test_closed_form_lambda_matches_eigensolver(R, d, beta):
    p = PfcParams(3, R, d)
    W = thermo.transfer_pair(p, beta).W
    rho = thermo.spectral_radius(W)
    assert thermo.lambda1(p, beta) == pytest.approx(rho, rel=1e-10)
    assert thermo.free_energy(p, beta) == pytest.approx(-np.log(rho) / beta, rel=1e-10)
    assert rho >= 4.0


def test_spectral_radius_examples():
    assert thermo.spectral_radius(np.eye(4)) == pytest.approx(1.0)
    assert thermo.spectral_radius(np.ones((4, 4))) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        thermo.spectral_radius(np.full((4, 4), np.inf))


def test_free_energy_finite_size_convergence():
    beta = 3.0
    R, d = 1.0, 0.5
    F = thermo.free_energy(PfcParams(2, R, d), beta)
    est = {M: -thermo.log_partition_function(PfcParams(M, R, d), beta) / (beta * M)
           for M in (4, 8, 12, 24)}
    # brute force pins the M = 8 value
    assert -thermo.brute_log_partition(PfcParams(8, R, d), beta) / (beta * 8) == pytest.approx(est[8], rel=1e-10)
    gaps = [abs(est[M] - F) for M in (4, 8, 12, 24)]
    assert gaps == sorted(gaps, reverse=True)
    assert F <= est[8] and F <= est[12]


@pytest.mark.parametrize("beta", [0.5, 2.0, 5.0])
def test_average_mag_monotone_in_d(beta):
    ds = np.linspace(0.01, 0.99, 50)
    mags = [thermo.average_magnetization(PfcParams(4, 1.0, d), beta) for d in ds]
    assert np.all(np.diff(mags) >= -1e-12)


def test_thermo_rows():
    rows = thermo.thermo_rows([PfcParams(2, 1.0, 0.1)], [1.0])
    assert len(rows) == 1 and len(rows[0]) == len(thermo.THERMO_CSV_COLUMNS)
