import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfc_lab import semiclassical as sc
from pfc_lab.ising import DEFAULT_SCHEDULE, PfcParams, build_pfc
from pfc_lab.spectral import build_hamiltonian, min_gap, snapshot

P2 = PfcParams(2, 1.0, 0.09)


def dense_expectation(params, s, ta, tb):
    psi = sc.coherent_vector(sc.CoherentAngles(ta, tb), params.n_qubits)
    H = build_hamiltonian(build_pfc(params), DEFAULT_SCHEDULE, s)
    return float(np.real(psi.conj() @ H @ psi))


def test_coherent_vector_examples():
    n = 4
    up = sc.coherent_vector(sc.CoherentAngles(0.0, 0.0), n)
    assert up[0] == pytest.approx(1.0) and np.allclose(up[1:], 0)
    plus = sc.coherent_vector(sc.CoherentAngles(np.pi / 2, np.pi / 2), n)
    assert np.allclose(plus, 2 ** -2)
    down = sc.coherent_vector(sc.CoherentAngles(np.pi, np.pi), n)
    assert abs(down[-1]) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, np.pi), min_size=4, max_size=4),
       st.lists(st.floats(-np.pi, np.pi), min_size=4, max_size=4))
def test_full_state_normalised(theta, phi):
    psi = sc.coherent_vector(sc.FullCoherentState(np.array(theta), np.array(phi)), 4)
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)


def test_potential_examples():
    assert sc.potential(P2, DEFAULT_SCHEDULE, 0.0, np.pi / 2, np.pi / 2) == pytest.approx(-12.0)
    assert sc.potential(P2, DEFAULT_SCHEDULE, 1.0, 0.0, 0.0) == pytest.approx(-9.54)


@pytest.mark.parametrize("M", [2, 3])
def test_potential_oracle(M):
    rng = np.random.default_rng(M)
    params = PfcParams(M, 1.0, 0.09 if M == 2 else 0.1)
    prob = build_pfc(params)
    for _ in range(100):
        s, ta, tb = rng.uniform(0, 1), *rng.uniform(-np.pi, np.pi, 2)
        closed = sc.potential(params, DEFAULT_SCHEDULE, s, ta, tb)
        dense = dense_expectation(params, s, ta, tb)
        assert closed == pytest.approx(dense, rel=1e-10, abs=1e-12)
        full = sc.FullCoherentState.from_reduced(sc.CoherentAngles(ta, tb), M)
        assert sc.spin_vector_energy(prob, DEFAULT_SCHEDULE, s, full.theta) == pytest.approx(closed, rel=1e-12, abs=1e-12)


def test_false_minimum_at_078():
    L = sc.landscape(P2, DEFAULT_SCHEDULE, 0.78)
    assert abs(L.argmin.theta_b - np.pi) < 0.3


def test_landscape_s0_unique():
    L = sc.landscape(P2, DEFAULT_SCHEDULE, 0.0)
    mins = L.local_minima()
    assert len(mins) == 1
    assert mins[0].theta_a == pytest.approx(np.pi / 2, abs=0.02)
    assert mins[0].theta_b == pytest.approx(np.pi / 2, abs=0.02)


def test_argmin_jumps_across_gap():
    s_min, _ = min_gap(build_pfc(P2))
    before = sc.landscape(P2, DEFAULT_SCHEDULE, s_min - 0.02).argmin
    after = sc.landscape(P2, DEFAULT_SCHEDULE, s_min + 0.02).argmin
    assert abs(before.theta_b - np.pi) < 0.3
    assert abs(after.theta_b) < 0.3
    assert abs(after.theta_a) < 0.3


@pytest.mark.parametrize("s", [0.72, 0.78, 0.83])
def test_bimodal_before_gap(s):
    mins = sc.landscape(P2, DEFAULT_SCHEDULE, s).local_minima()
    assert len(mins) == 2
    tb = sorted(m.theta_b for m in mins)
    assert tb[0] < 1.0 and tb[1] > 2.5


def test_trace_norm_examples():
    prob = build_pfc(P2)
    snap = snapshot(prob, DEFAULT_SCHEDULE, 0.0)
    assert sc.trace_norm_distance(snap, sc.CoherentAngles(np.pi / 2, np.pi / 2)) == pytest.approx(0.0, abs=1e-7)
    # |+>^N is orthogonal to the all-down-x product, i.e. theta = -pi/2
    assert sc.trace_norm_distance(snap, sc.CoherentAngles(-np.pi / 2, -np.pi / 2)) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_distance_bounds(s, ta, tb):
    snap = snapshot(build_pfc(P2), DEFAULT_SCHEDULE, s, k=1)
    D = sc.trace_norm_distance(snap, sc.CoherentAngles(ta, tb))
    assert 0.0 <= D <= 1.0


def test_distance_clamps_rounding():
    assert sc._distance(np.array([1 + 1e-13]))[0] == 0.0
    with pytest.raises(ValueError):
        sc._distance(np.array([1.1]))


def _refined_minima(s):
    mins = sc.landscape(P2, DEFAULT_SCHEDULE, s).local_minima()
    return [sc.refine_minimum(P2, DEFAULT_SCHEDULE, s, m) for m in mins]


def test_distance_global_min_near_pi_at_0835():
    snap = snapshot(build_pfc(P2), DEFAULT_SCHEDULE, 0.835)
    D = sc.distance_landscape(snap)
    assert D.argmin.theta_b > np.pi / 2


def test_distance_secondary_minimum_at_0835():
    s = 0.835
    snap = snapshot(build_pfc(P2), DEFAULT_SCHEDULE, s)
    far, near = sorted(_refined_minima(s), key=lambda m: -m.theta_b)
    prof = sc.hyperplane_distance(snap, far, near, 401)
    idx = sc.interior_minima(prof)
    near_zero = [i for i in idx if prof[i][0] > 0.5]
    assert near_zero, "no secondary distance minimum on the backbone-up side"


def test_hyperplane_constant_segment():
    a = sc.CoherentAngles(0.3, -1.2)
    prof = sc.hyperplane_scan(P2, DEFAULT_SCHEDULE, 0.4, a, a, 11)
    assert np.ptp([v for _, v in prof]) == 0


def test_hyperplane_barrier_at_080():
    s = 0.80
    p0, p1 = _refined_minima(s)
    prof = sc.hyperplane_scan(P2, DEFAULT_SCHEDULE, s, p0, p1, 401)
    v = np.array([x for _, x in prof])
    assert v.max() > max(v[0], v[-1]) + 1.0
    assert len(sc.interior_minima(prof)) == 0  # wells sit at the refined endpoints


def test_hyperplane_single_well_at_090():
    s = 0.90
    gmin = sc.refine_minimum(P2, DEFAULT_SCHEDULE, s, sc.landscape(P2, DEFAULT_SCHEDULE, s).argmin)
    assert abs(gmin.theta_b) < 0.3
    p0 = sc.CoherentAngles(gmin.theta_a, gmin.theta_b - np.pi / 2)
    p1 = sc.CoherentAngles(gmin.theta_a, gmin.theta_b + np.pi / 2)
    prof = sc.hyperplane_scan(P2, DEFAULT_SCHEDULE, s, p0, p1, 401)
    idx = sc.interior_minima(prof)
    assert idx == [200]
