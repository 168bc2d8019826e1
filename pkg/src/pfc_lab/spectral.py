"""Dense transverse-field Ising Hamiltonians and their instantaneous spectra.

``H(s) = -A(s) sum_j X_j + B(s) H_P`` with ``H_P`` diagonal in the
computational basis. Basis index ``k`` follows :func:`pfc_lab.ising.all_configs`
(qubit 0 is the most significant bit, bit value 1 means spin -1).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .ising import (AnnealSchedule, DEFAULT_SCHEDULE, IsingProblem, PfcParams, TooLarge,
                    all_configs, build_pfc, config_index, diagonal_energies)

MAX_DENSE_QUBITS = 12
DEGENERACY_TOL = 1e-9  # GHz


class EigensolverFailure(RuntimeError):
    pass


class NearDegeneracyWarning(RuntimeWarning):
    pass


def _check_dense(n: int):
    if n > MAX_DENSE_QUBITS:
        raise TooLarge(f"{n} qubits exceeds the dense bound of {MAX_DENSE_QUBITS}")


@lru_cache(maxsize=8)
def transverse_operator(n: int) -> np.ndarray:
    """``sum_j X_j`` as a dense real matrix (built by bit flips)."""
    _check_dense(n)
    dim = 2 ** n
    out = np.zeros((dim, dim))
    k = np.arange(dim)
    for j in range(n):
        out[k, k ^ (1 << (n - 1 - j))] = 1.0
    out.setflags(write=False)
    return out


@lru_cache(maxsize=8)
def z_diagonals(n: int) -> np.ndarray:
    """``(n, 2^n)`` array whose row j is the diagonal of Z_j."""
    z = all_configs(n).T.astype(float)
    z.setflags(write=False)
    return z


def problem_diagonal(problem: IsingProblem) -> np.ndarray:
    _check_dense(problem.n_qubits)
    return diagonal_energies(problem)


def build_hamiltonian(problem: IsingProblem, schedule: AnnealSchedule = DEFAULT_SCHEDULE,
                      s: float = 0.0, diag: np.ndarray | None = None) -> np.ndarray:
    """Dense real-symmetric ``H(s)`` in GHz.

    ``diag`` may carry a precomputed problem diagonal to avoid re-enumeration
    inside sweeps.
    """
    n = problem.n_qubits
    _check_dense(n)
    if diag is None:
        diag = problem_diagonal(problem)
    H = -schedule.A(s) * transverse_operator(n)
    H[np.diag_indices_from(H)] += schedule.B(s) * diag
    return H


@dataclass(frozen=True)
class SpectralSnapshot:
    s: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    k: int

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    @property
    def ground(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    def overlap(self, level: int, state: np.ndarray) -> complex:
        return complex(np.vdot(self.eigenvectors[:, level], state))

    def populations(self, rho: np.ndarray) -> np.ndarray:
        """``<E_j| rho |E_j>`` for every retained level."""
        V = self.eigenvectors
        return np.real(np.einsum("ak,ab,bk->k", V.conj(), rho, V))


def _eigh(H, k, s):
    try:
        if k >= H.shape[0]:
            return np.linalg.eigh(H)
        return sla.eigh(H, subset_by_index=[0, k - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverFailure(f"eigensolver failed at s={s!r}: {exc}") from exc


def snapshot(problem: IsingProblem, schedule: AnnealSchedule = DEFAULT_SCHEDULE,
             s: float = 0.0, k: int | None = None, diag=None) -> SpectralSnapshot:
    H = build_hamiltonian(problem, schedule, s, diag)
    dim = H.shape[0]
    k = dim if k is None else int(k)
    if not 1 <= k <= dim:
        raise ValueError(f"k={k} outside 1..{dim}")
    w, v = _eigh(H, k, s)
    return SpectralSnapshot(float(s), w, v, k)


def gap_at(problem, schedule, s, diag=None) -> float:
    H = build_hamiltonian(problem, schedule, s, diag)
    w = sla.eigh(H, eigvals_only=True, subset_by_index=[0, 1])
    return float(w[1] - w[0])


def min_gap(problem: IsingProblem, schedule: AnnealSchedule = DEFAULT_SCHEDULE,
            grid_step: float = 1e-2, xtol: float = 1e-7) -> tuple[float, float]:
    """Location and size of the global minimum of ``E_1(s) - E_0(s)`` on (0, 1).

    A coarse grid picks the best bracket, then golden-section search refines it.
    """
    diag = problem_diagonal(problem)
    grid = np.arange(grid_step, 1.0 - grid_step / 2, grid_step)
    gaps = np.array([gap_at(problem, schedule, s, diag) for s in grid])
    i = int(np.argmin(gaps))
    i = min(max(i, 1), len(grid) - 2)
    a, b, c = grid[i - 1], grid[i], grid[i + 1]
    if not gaps[i] <= min(gaps[i - 1], gaps[i + 1]):
        # minimum sits on the grid edge; fall back to a bounded search
        res = minimize_scalar(lambda s: gap_at(problem, schedule, s, diag),
                              bounds=(a, c), method="bounded", options={"xatol": xtol})
    else:
        res = minimize_scalar(lambda s: gap_at(problem, schedule, s, diag),
                              bracket=(a, b, c), method="golden", tol=xtol)
    return float(res.x), float(res.fun)


def instantaneous_magnetization(problem: IsingProblem,
                                schedule: AnnealSchedule = DEFAULT_SCHEDULE,
                                s: float = 0.0, diag=None) -> float:
    """Average ``<E_0(s)| Z_j |E_0(s)>`` over all qubits."""
    snap = snapshot(problem, schedule, s, k=2, diag=diag)
    if snap.gap < DEGENERACY_TOL:
        warnings.warn(f"ground level near-degenerate at s={s:g} (gap {snap.gap:.3g} GHz); "
                      "magnetization uses the solver's ground vector", NearDegeneracyWarning)
    p = np.abs(snap.ground) ** 2
    return float(z_diagonals(problem.n_qubits).mean(axis=0) @ p)


@dataclass(frozen=True)
class PhaseDiagram:
    d_values: np.ndarray
    s_values: np.ndarray
    magnetization: np.ndarray  # shape (len(d), len(s))
    sign_changes: list  # (d, s) points where the magnetization crosses zero

    def rows(self):
        for i, d in enumerate(self.d_values):
            for j, s in enumerate(self.s_values):
                yield (float(d), float(s), float(self.magnetization[i, j]))


def _zero_crossings(s_values, mags, tol=1e-12):
    out = []
    for j in range(len(s_values) - 1):
        m0, m1 = mags[j], mags[j + 1]
        if abs(m0) < tol or abs(m1) < tol:
            continue
        if np.sign(m0) != np.sign(m1):
            t = m0 / (m0 - m1)
            out.append(float(s_values[j] + t * (s_values[j + 1] - s_values[j])))
    return out


def phase_diagram(M: int, d_values, s_values, R: float = 1.0,
                  schedule: AnnealSchedule = DEFAULT_SCHEDULE) -> PhaseDiagram:
    d_values = np.asarray(d_values, float)
    s_values = np.asarray(s_values, float)
    mags = np.empty((len(d_values), len(s_values)))
    crossings = []
    for i, d in enumerate(d_values):
        problem = build_pfc(PfcParams(M, R, float(d)))
        diag = problem_diagonal(problem)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearDegeneracyWarning)
            for j, s in enumerate(s_values):
                mags[i, j] = instantaneous_magnetization(problem, schedule, s, diag)
        crossings.extend((float(d), sc) for sc in _zero_crossings(s_values, mags[i]))
    return PhaseDiagram(d_values, s_values, mags, crossings)


def ground_overlap(snap: SpectralSnapshot, config) -> float:
    """``|<E_0 | config>|`` for a computational basis configuration."""
    return float(abs(snap.eigenvectors[config_index(config), 0]))


@dataclass(frozen=True)
class GibbsState:
    rho: np.ndarray
    p0: float
    populations: np.ndarray


def gibbs_state(problem: IsingProblem, schedule: AnnealSchedule = DEFAULT_SCHEDULE,
                s: float = 0.0, beta: float = 1.0, diag=None) -> GibbsState:
    """Thermal state ``exp(-beta H(s)) / Z`` with ``beta`` in GHz^-1."""
    snap = snapshot(problem, schedule, s, diag=diag)
    w = snap.eigenvalues - snap.eigenvalues[0]
    p = np.exp(-beta * w)
    p /= p.sum()
    V = snap.eigenvectors
    rho = (V * p) @ V.conj().T
    return GibbsState(rho, float(p[0]), p)


def spectrum_rows(problem, schedule, s_values, k):
    """``(s, E_0..E_{k-1})`` rows for CSV output."""
    diag = problem_diagonal(problem)
    rows = []
    for s in s_values:
        snap = snapshot(problem, schedule, s, k=k, diag=diag)
        rows.append((float(s), *map(float, snap.eigenvalues[:k])))
    return rows
