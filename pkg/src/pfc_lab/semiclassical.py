"""Spin-coherent product states and the semi-classical PFC landscape.

The reduced Ansatz gives every auxiliary qubit the polar angle ``theta_a``
and every backbone qubit ``theta_b`` (azimuth zero). Since
``<Z> = cos(theta)`` and ``<X> = sin(theta)`` for such a qubit, the expected
energy of the PFC Hamiltonian is

    V = -A(s) M (sin ta + sin tb)
        + B(s) R [M (1-d) cos tb - M cos ta - M cos ta cos tb - (M-1) cos^2 tb].

The test-suite checks this against dense ``<psi|H(s)|psi>``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .ising import AnnealSchedule, DEFAULT_SCHEDULE, IsingProblem, PfcParams, all_configs
from .spectral import SpectralSnapshot, _check_dense

GRID_POINTS = 201


@dataclass(frozen=True)
class CoherentAngles:
    theta_a: float
    theta_b: float

    def __post_init__(self):
        if not (np.isfinite(self.theta_a) and np.isfinite(self.theta_b)):
            raise ValueError("coherent angles must be finite")


@dataclass(frozen=True)
class FullCoherentState:
    theta: np.ndarray
    phi: np.ndarray

    @classmethod
    def from_reduced(cls, angles: CoherentAngles, M: int) -> "FullCoherentState":
        theta = np.r_[np.full(M, angles.theta_a), np.full(M, angles.theta_b)]
        return cls(theta, np.zeros(2 * M))


def coherent_vector(angles, n_qubits: int) -> np.ndarray:
    """Normalised product state ``prod_j cos(t_j/2)|0> + e^{i p_j} sin(t_j/2)|1>``."""
    _check_dense(n_qubits)
    if isinstance(angles, CoherentAngles):
        if n_qubits % 2:
            raise ValueError("reduced angles need an even qubit count")
        angles = FullCoherentState.from_reduced(angles, n_qubits // 2)
    theta = np.asarray(angles.theta, float)
    phi = np.asarray(angles.phi, float)
    if theta.shape != (n_qubits,) or phi.shape != (n_qubits,):
        raise ValueError(f"expected {n_qubits} angles per coordinate")
    psi = np.ones(1, dtype=complex)
    for t, p in zip(theta, phi):
        psi = np.kron(psi, [np.cos(t / 2), np.exp(1j * p) * np.sin(t / 2)])
    return psi


def spin_vector_energy(problem: IsingProblem, schedule: AnnealSchedule, s: float,
                       theta, phi=None) -> float:
    """Expected ``H(s)`` energy of a product state with per-qubit angles.

    Identical to the spin-vector energy function; ``phi=None`` means the planar
    (XZ-plane) form.
    """
    theta = np.asarray(theta, float)
    c = np.cos(theta)
    x = np.sin(theta) if phi is None else np.sin(theta) * np.cos(np.asarray(phi, float))
    zz = sum(v * c[i] * c[j] for (i, j), v in problem.J.items())
    return float(-schedule.A(s) * x.sum() + schedule.B(s) * (problem.h_vector @ c + zz))


def potential(params: PfcParams, schedule: AnnealSchedule = DEFAULT_SCHEDULE, s: float = 0.0,
              theta_a=0.0, theta_b=0.0):
    """Two-angle semi-classical potential in GHz. Broadcasts over angle arrays."""
    M, R, d = params.M, params.R, params.d
    ca, cb = np.cos(theta_a), np.cos(theta_b)
    transverse = -schedule.A(s) * M * (np.sin(theta_a) + np.sin(theta_b))
    ising = R * (M * (1 - d) * cb - M * ca - M * ca * cb - (M - 1) * cb * cb)
    return transverse + schedule.B(s) * ising


def angle_grid(n: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(-np.pi, np.pi, n)


def _periodic_local_minima(values: np.ndarray) -> list[tuple[int, int]]:
    """Strict 8-neighbour minima on a periodic grid whose last row/column repeat the first."""
    core = values[:-1, :-1]
    is_min = np.ones(core.shape, bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_min &= core < np.roll(np.roll(core, di, axis=0), dj, axis=1)
    return [tuple(map(int, ij)) for ij in np.argwhere(is_min)]


@dataclass(frozen=True)
class Landscape:
    s: float
    theta_a: np.ndarray
    theta_b: np.ndarray
    values: np.ndarray  # indexed [i_a, i_b]

    @property
    def argmin(self) -> CoherentAngles:
        i, j = np.unravel_index(np.argmin(self.values), self.values.shape)
        return CoherentAngles(float(self.theta_a[i]), float(self.theta_b[j]))

    def local_minima(self) -> list[CoherentAngles]:
        idx = _periodic_local_minima(self.values)
        idx.sort(key=lambda ij: self.values[ij])
        return [CoherentAngles(float(self.theta_a[i]), float(self.theta_b[j])) for i, j in idx]

    def rows(self):
        for i, ta in enumerate(self.theta_a):
            for j, tb in enumerate(self.theta_b):
                yield (float(ta), float(tb), float(self.values[i, j]))


def landscape(params: PfcParams, schedule: AnnealSchedule = DEFAULT_SCHEDULE, s: float = 0.0,
              grid: np.ndarray | None = None) -> Landscape:
    grid = angle_grid() if grid is None else np.asarray(grid, float)
    ta, tb = np.meshgrid(grid, grid, indexing="ij")
    return Landscape(float(s), grid, grid, potential(params, schedule, s, ta, tb))


def refine_minimum(params: PfcParams, schedule: AnnealSchedule, s: float,
                   start: CoherentAngles) -> CoherentAngles:
    """Polish a grid minimum with Powell's coordinate-direction search."""
    res = minimize(lambda x: potential(params, schedule, s, x[0], x[1]),
                   x0=[start.theta_a, start.theta_b], method="Powell",
                   options={"xtol": 1e-10, "ftol": 1e-14})
    return CoherentAngles(float(res.x[0]), float(res.x[1]))


def _reduced_amplitudes(M: int, theta_a, theta_b) -> np.ndarray:
    """Basis amplitudes of the reduced coherent state for arrays of angles.

    Returns shape ``angles.shape + (4^M,)``.
    """
    cfg = all_configs(2 * M)
    n_a = (cfg[:, :M] < 0).sum(axis=1)
    n_b = (cfg[:, M:] < 0).sum(axis=1)
    ta = np.asarray(theta_a, float)[..., None]
    tb = np.asarray(theta_b, float)[..., None]
    ca, sa = np.cos(ta / 2), np.sin(ta / 2)
    cb, sb = np.cos(tb / 2), np.sin(tb / 2)
    return ca ** (M - n_a) * sa ** n_a * cb ** (M - n_b) * sb ** n_b


def trace_norm_distance(snap: SpectralSnapshot, angles: CoherentAngles) -> float:
    """``sqrt(1 - |<E_0|theta_a, theta_b>|^2)``."""
    M = int(round(np.log2(snap.eigenvectors.shape[0]))) // 2
    amp = _reduced_amplitudes(M, angles.theta_a, angles.theta_b)
    return float(_distance(np.abs(amp @ snap.ground.conj()) ** 2))


def _distance(overlap_sq):
    rad = 1.0 - overlap_sq
    if np.any(rad < -1e-12):
        raise ValueError("overlap exceeds one; eigenvector or state not normalised")
    return np.sqrt(np.clip(rad, 0.0, None))


def distance_landscape(snap: SpectralSnapshot, grid: np.ndarray | None = None) -> Landscape:
    grid = angle_grid() if grid is None else np.asarray(grid, float)
    M = int(round(np.log2(snap.eigenvectors.shape[0]))) // 2
    ta, tb = np.meshgrid(grid, grid, indexing="ij")
    amp = _reduced_amplitudes(M, ta, tb)
    D = _distance(np.abs(amp @ snap.ground.conj()) ** 2)
    return Landscape(snap.s, grid, grid, D)


def _segment(p0: CoherentAngles, p1: CoherentAngles, n_points: int):
    t = np.linspace(0.0, 1.0, n_points)
    ta = p0.theta_a + t * (p1.theta_a - p0.theta_a)
    tb = p0.theta_b + t * (p1.theta_b - p0.theta_b)
    return t, ta, tb


def hyperplane_scan(params: PfcParams, schedule: AnnealSchedule, s: float,
                    p0: CoherentAngles, p1: CoherentAngles, n_points: int = 201):
    """``(t, V)`` along the straight segment from ``p0`` (t=0) to ``p1`` (t=1)."""
    t, ta, tb = _segment(p0, p1, n_points)
    V = potential(params, schedule, s, ta, tb)
    return list(zip(t.tolist(), np.asarray(V).tolist()))


def hyperplane_distance(snap: SpectralSnapshot, p0: CoherentAngles, p1: CoherentAngles,
                        n_points: int = 201):
    """``(t, D)`` along the same segment for the trace-norm distance."""
    M = int(round(np.log2(snap.eigenvectors.shape[0]))) // 2
    t, ta, tb = _segment(p0, p1, n_points)
    D = _distance(np.abs(_reduced_amplitudes(M, ta, tb) @ snap.ground.conj()) ** 2)
    return list(zip(t.tolist(), D.tolist()))


def interior_minima(profile) -> list[int]:
    """Indices of strict interior local minima of a sampled 1-d profile."""
    y = np.array([v for _, v in profile])
    return [i for i in range(1, len(y) - 1) if y[i] < y[i - 1] and y[i] < y[i + 1]]
