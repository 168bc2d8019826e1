import warnings
from functools import reduce
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfc_lab import spectral as sp
from pfc_lab.ising import (DEFAULT_SCHEDULE, IsingProblem, PfcParams, TooLarge, all_configs,
                           build_pfc, classical_energy)
from pfc_lab.units import beta_ghz

X = np.array([[0.0, 1.0], [1.0, 0.0]])
Z = np.diag([1.0, -1.0])
I2 = np.eye(2)


def kron_hamiltonian(problem, s):
    """Independent Kronecker-product assembly, terms added in reverse qubit order."""
    n = problem.n_qubits

    def op(single, j):
        return reduce(np.kron, [single if q == j else I2 for q in range(n)])

    H = np.zeros((2 ** n, 2 ** n))
    for j in reversed(range(n)):
        H -= DEFAULT_SCHEDULE.A(s) * op(X, j)
        H += DEFAULT_SCHEDULE.B(s) * problem.h.get(j, 0.0) * op(Z, j)
    for (i, j), v in reversed(list(problem.J.items())):
        H += DEFAULT_SCHEDULE.B(s) * v * op(Z, i) @ op(Z, j)
    return H


@pytest.mark.parametrize("M,d,s", [(2, 0.09, 0.5), (2, 0.09, 0.13), (3, 0.1, 0.77)])
def test_dual_construction(M, d, s):
    prob = build_pfc(PfcParams(M, 1.0, d))
    H = sp.build_hamiltonian(prob, DEFAULT_SCHEDULE, s)
    K = kron_hamiltonian(prob, s)
    assert np.max(np.abs(H - K)) < 1e-12
    assert np.linalg.eigvalsh(H)[0] == pytest.approx(np.linalg.eigvalsh(K)[0], abs=1e-10)
    assert np.max(np.abs(H - H.T)) == 0


def test_endpoints(pfc3):
    H1 = sp.build_hamiltonian(pfc3, DEFAULT_SCHEDULE, 1.0)
    assert np.count_nonzero(H1 - np.diag(np.diag(H1))) == 0
    expect = [3 * classical_energy(pfc3, c) for c in all_configs(6)]
    assert np.allclose(np.diag(H1), expect)
    w = np.linalg.eigvalsh(sp.build_hamiltonian(pfc3, DEFAULT_SCHEDULE, 0.0))
    N = 6
    levels = np.concatenate([[-3 * (N - 2 * k)] * comb(N, k) for k in range(N + 1)])
    assert np.allclose(w, levels)


def test_too_large():
    with pytest.raises(TooLarge):
        sp.build_hamiltonian(IsingProblem(13, {0: 1.0}))


def test_snapshot_examples(pfc3):
    snap = sp.snapshot(pfc3, DEFAULT_SCHEDULE, 0.0, k=1)
    assert np.allclose(np.abs(snap.ground), 2 ** -3)
    snap = sp.snapshot(pfc3, DEFAULT_SCHEDULE, 1.0, k=9)
    assert snap.eigenvalues[0] == pytest.approx(3 * -5.3)
    assert np.allclose(snap.eigenvalues[1:], 3 * -4.7)
    with pytest.raises(ValueError):
        sp.snapshot(pfc3, DEFAULT_SCHEDULE, 0.5, k=65)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1), st.integers(1, 16))
def test_snapshot_invariants(s, k):
    prob = build_pfc(PfcParams(2, 1.0, 0.09))
    H = sp.build_hamiltonian(prob, DEFAULT_SCHEDULE, s)
    snap = sp.snapshot(prob, DEFAULT_SCHEDULE, s, k=k)
    V, w = snap.eigenvectors, snap.eigenvalues
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(V.conj().T @ V, np.eye(k), atol=1e-10)
    resid = np.linalg.norm(H @ V - V * w, axis=0)
    assert np.all(resid <= 1e-8 * np.linalg.norm(H, 2))


def test_min_gap_location_m2(pfc2):
    s_min, gap = sp.min_gap(pfc2)
    assert abs(s_min - 0.841) <= 0.001
    grid = np.linspace(0.01, 0.99, 981)
    diag = sp.problem_diagonal(pfc2)
    gaps = [sp.gap_at(pfc2, DEFAULT_SCHEDULE, s, diag) for s in grid]
    assert gap <= min(gaps) + 1e-12
    assert sp.snapshot(pfc2, DEFAULT_SCHEDULE, 0.841).gap == pytest.approx(gap, rel=1e-3)


@pytest.mark.parametrize("d,target", [(0.1, 0.8227), (0.05, 0.9059)])
def test_min_gap_location_m3(d, target):
    s_min, gap = sp.min_gap(build_pfc(PfcParams(3, 1.0, d)))
    assert abs(s_min - target) <= 0.001
    assert gap > 0


def test_min_gap_resolution(pfc2):
    s_min, _ = sp.min_gap(pfc2)
    diag = sp.problem_diagonal(pfc2)
    here = sp.gap_at(pfc2, DEFAULT_SCHEDULE, s_min, diag)
    for ds in (-1e-4, 1e-4):
        assert sp.gap_at(pfc2, DEFAULT_SCHEDULE, s_min + ds, diag) > here


def test_gap_equals_temperature_at_d0227():
    _, gap = sp.min_gap(build_pfc(PfcParams(3, 1.0, 0.227)))
    kT = 1 / beta_ghz(12.0)
    assert kT == pytest.approx(0.2500, abs=1e-4)
    assert abs(gap - kT) <= 0.1 * kT


def test_gap_positive():
    for d in (0.05, 0.1, 0.3):
        prob = build_pfc(PfcParams(3, 1.0, d))
        diag = sp.problem_diagonal(prob)
        assert min(sp.gap_at(prob, DEFAULT_SCHEDULE, s, diag) for s in np.linspace(0.01, 0.99, 99)) > 0


def test_magnetization_examples(pfc2):
    assert abs(sp.instantaneous_magnetization(pfc2, DEFAULT_SCHEDULE, 0.0)) < 1e-12
    assert sp.instantaneous_magnetization(pfc2, DEFAULT_SCHEDULE, 1.0) == pytest.approx(1.0)
    # negative backbone-dominated regime before the crossing, positive after
    assert sp.instantaneous_magnetization(pfc2, DEFAULT_SCHEDULE, 0.82) < 0
    assert sp.instantaneous_magnetization(pfc2, DEFAULT_SCHEDULE, 0.85) > 0


def test_magnetization_sign_change_near_gap(pfc2):
    s_min, _ = sp.min_gap(pfc2)
    s = np.linspace(0.8, 0.9, 1001)
    pd = sp.phase_diagram(2, [0.09], s)
    crossings = [sc for _, sc in pd.sign_changes]
    assert any(abs(sc - s_min) <= 0.005 for sc in crossings)


def test_phase_diagram_rows():
    s = np.linspace(0, 1, 41)
    pd = sp.phase_diagram(2, [0.09, 0.8], s)
    assert np.allclose(pd.magnetization[:, 0], 0, atol=1e-12)
    row = pd.magnetization[1]
    assert np.all(row >= -1e-12) and np.all(np.diff(row) >= -1e-12)
    assert pd.magnetization[0].min() < 0
    assert len(list(pd.rows())) == 2 * 41


def test_degeneracy_flag():
    prob = IsingProblem(2, {}, {(0, 1): 1.0})
    with pytest.warns(sp.NearDegeneracyWarning):
        sp.instantaneous_magnetization(prob, DEFAULT_SCHEDULE, 1.0)


def test_ground_overlap_examples(pfc3):
    assert sp.ground_overlap(sp.snapshot(pfc3, DEFAULT_SCHEDULE, 1.0), np.ones(6)) == pytest.approx(1.0)
    ov = sp.ground_overlap(sp.snapshot(pfc3, DEFAULT_SCHEDULE, 0.83), np.ones(6))
    assert abs(ov - 0.98) <= 0.01
    cfg = np.array([1, -1, 1, -1, -1, 1])
    assert sp.ground_overlap(sp.snapshot(pfc3, DEFAULT_SCHEDULE, 0.0), cfg) == pytest.approx(2 ** -3)


def test_gibbs_examples(pfc3):
    g = sp.gibbs_state(pfc3, DEFAULT_SCHEDULE, 0.5, beta=1e4)
    assert g.p0 == pytest.approx(1.0)
    assert np.trace(g.rho).real == pytest.approx(1.0, abs=1e-12)
    prob = build_pfc(PfcParams(2, 1.0, 0.3))
    b = 3.999
    Zsum = sum(comb(4, k) * np.exp(b * 3 * (4 - 2 * k)) for k in range(5))
    g = sp.gibbs_state(prob, DEFAULT_SCHEDULE, 0.0, beta=b)
    assert g.p0 == pytest.approx(np.exp(b * 12) / Zsum, rel=1e-10)


def test_gibbs_curve_shape():
    prob = build_pfc(PfcParams(3, 1.0, 0.05))
    beta = beta_ghz(12.0)
    s = np.linspace(0.6, 1.0, 401)
    diag = sp.problem_diagonal(prob)
    p0 = np.array([sp.gibbs_state(prob, DEFAULT_SCHEDULE, x, beta, diag).p0 for x in s])
    i = int(np.argmin(p0))
    assert abs(s[i] - 0.9059) <= 0.02
    tail = p0[s >= 0.97]
    assert p0[-1] > p0[i] + 0.1
    assert np.ptp(tail) < 0.05


def test_spectrum_rows(pfc2):
    rows = sp.spectrum_rows(pfc2, DEFAULT_SCHEDULE, [0.0, 0.5], 3)
    assert len(rows) == 2 and len(rows[0]) == 4
