"""Closed and open-system density-matrix dynamics along an anneal.

Unit convention: static energies are in GHz. At the dynamics boundary every
Hamiltonian is multiplied by 2 pi (rad/ns) and time is in ns. The system-bath
interaction ``g Z_j (x) B`` is an energy term like any other, so its system
operator is scaled by the same 2 pi (``BathParams.operator_scale``), which puts
a factor ``operator_scale**2`` on every dissipative rate.

The open-system generator is Davies-style: Lindblad operators live in the
instantaneous eigenbasis of ``H(s)``, Bohr frequencies closer than ``gap_tol``
share a bin, and the operators of a bin are summed per qubit before the
dissipator is formed. No Lamb shift.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numba as nb
import numpy as np
from scipy.integrate import solve_ivp
import scipy.linalg as sla
from scipy.linalg import expm

from .ising import AnnealSchedule, DEFAULT_SCHEDULE, IsingProblem, PfcParams, build_pfc
from .spectral import (SpectralSnapshot, build_hamiltonian, min_gap, problem_diagonal,
                       snapshot, z_diagonals)
from .units import TWO_PI, beta_angular

GAP_TOL = 1e-6  # GHz
RTOL = 1e-8
ATOL = 1e-10
ADIABATIC_ANCHOR = (PfcParams(3, 1.0, 0.3), 20.0)  # instance and its adiabatic run time in ns


class IntegrationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class BathParams:
    T: float = 12.0          # mK
    omega_c: float = 4.0     # GHz, converted to rad/ns with the Hamiltonian
    eta_g2: float = 1e-3
    operator_scale: float = TWO_PI

    def __post_init__(self):
        if not (self.T > 0 and self.omega_c > 0 and self.operator_scale > 0):
            raise ValueError("bath temperature, cutoff and operator scale must be positive")
        if not self.eta_g2 >= 0:
            raise ValueError("eta_g2 must be non-negative")

    @property
    def beta(self) -> float:
        """Inverse temperature in ns/rad."""
        return beta_angular(self.T)

    @property
    def omega_c_angular(self) -> float:
        return TWO_PI * self.omega_c


def bath_gamma(omega, bath: BathParams = BathParams()):
    """Ohmic rate ``2 pi eta w e^{-|w|/wc} / (1 - e^{-beta w})`` in 1/ns.

    ``omega`` is a Bohr frequency in GHz; it is converted to rad/ns along with
    the cutoff. The ``w -> 0`` limit is ``2 pi eta / beta``.
    """
    w = TWO_PI * np.asarray(omega, float)
    beta = bath.beta
    small = np.abs(w) < 1e-12
    safe = np.where(small, 1.0, w)
    a = np.abs(safe)
    # written in |w| so that emission (w < 0) never overflows
    g = TWO_PI * bath.eta_g2 * a * np.exp(-a / bath.omega_c_angular) / -np.expm1(-beta * a)
    g = np.where(safe < 0, g * np.exp(-beta * a), g)
    g = np.where(small, TWO_PI * bath.eta_g2 / beta, g)
    return g if g.ndim else float(g)


@nb.njit(cache=True)
def _gamma(w, beta, wc, eta):
    if abs(w) < 1e-12:
        return 2 * np.pi * eta / beta
    a = abs(w)
    g = 2 * np.pi * eta * a * np.exp(-a / wc) / (-np.expm1(-beta * a))
    return g if w > 0 else g * np.exp(-beta * a)


@nb.njit(cache=True)
def _davies(E, A, r, tol, beta, wc, eta):
    """Davies dissipator in the eigenbasis.

    ``E`` are angular eigenvalues, ``A[j, l, k] = <E_l|Z_j|E_k>`` (real), ``r`` is
    rho in the eigenbasis. Jumps k -> l with ``E_k - E_l`` within ``tol`` of each
    other are binned and their operators summed per qubit.
    """
    d = E.shape[0]
    nq = A.shape[0]
    w = np.empty(d * d)
    for k in range(d):
        for l in range(d):
            w[k * d + l] = E[k] - E[l]
    order = np.argsort(w)
    J = np.zeros((d, d), np.complex128)
    K = np.zeros((d, d), np.complex128)
    n = d * d
    start = 0
    while start < n:
        end = start + 1
        while end < n and w[order[end]] - w[order[end - 1]] < tol:
            end += 1
        wm = 0.0
        for i in range(start, end):
            wm += w[order[i]]
        g = _gamma(wm / (end - start), beta, wc, eta)
        for i in range(start, end):
            p = order[i]
            k = p // d
            l = p % d
            for i2 in range(start, end):
                q = order[i2]
                k2 = q // d
                l2 = q % d
                c = 0.0
                for j in range(nq):
                    c += A[j, l, k] * A[j, l2, k2]
                if c == 0.0:
                    continue
                c *= g
                J[l, l2] += c * r[k, k2]
                if l == l2:
                    K[k, k2] += c
        start = end
    return J - 0.5 * (K @ r + r @ K)


def z_elements(eigenvectors: np.ndarray, n_qubits: int) -> np.ndarray:
    """``A[j, l, k] = <E_l| Z_j |E_k>`` for every qubit."""
    U = eigenvectors
    zs = z_diagonals(n_qubits)
    return np.matmul(U.conj().T[None], zs[:, :, None] * U[None]).real


# -- explicit Lindblad operators ---------------------------------------------

@dataclass(frozen=True)
class LindbladBin:
    """Jumps ``k -> l`` sharing one Bohr frequency bin.

    ``amplitudes[j, m] = <E_l|Z_j|E_k>`` for the m-th pair in ``pairs``.
    """
    omega: float  # GHz, mean of the bin
    pairs: np.ndarray  # (n, 2) rows of (l, k)
    amplitudes: np.ndarray  # (n_qubits, n)

    def operator(self, j: int, eigenvectors: np.ndarray | None = None) -> np.ndarray:
        """``L_{j,omega}``; eigenbasis if no eigenvectors, else computational basis."""
        dim = self.pairs.max() + 1 if eigenvectors is None else eigenvectors.shape[1]
        L = np.zeros((dim, dim))
        np.add.at(L, (self.pairs[:, 0], self.pairs[:, 1]), self.amplitudes[j])
        if eigenvectors is None:
            return L
        U = eigenvectors
        return U @ L @ U.conj().T


def lindblad_set(snap: SpectralSnapshot, gap_tol: float = GAP_TOL) -> list[LindbladBin]:
    """Bin all jumps of ``snap`` by Bohr frequency, keeping those with a nonzero element."""
    V = snap.eigenvectors
    n = int(round(np.log2(V.shape[0])))
    A = z_elements(V, n)
    E = snap.eigenvalues
    k = len(E)
    kk, ll = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    w = (E[:, None] - E[None, :]).ravel()  # E_k - E_l
    kk, ll = kk.ravel(), ll.ravel()
    order = np.argsort(w, kind="stable")
    splits = np.flatnonzero(np.diff(w[order]) >= gap_tol) + 1
    bins = []
    for idx in np.split(order, splits):
        amp = A[:, ll[idx], kk[idx]]
        keep = np.any(amp != 0.0, axis=0)
        if not keep.any():
            continue
        pairs = np.stack([ll[idx][keep], kk[idx][keep]], axis=1)
        bins.append(LindbladBin(float(w[idx].mean()), pairs, amp[:, keep]))
    return bins


def dissipator_reference(snap: SpectralSnapshot, rho: np.ndarray, bath: BathParams = BathParams(),
                         gap_tol: float = GAP_TOL) -> np.ndarray:
    """Dissipator built from explicit computational-basis Lindblad operators (slow)."""
    n = int(round(np.log2(snap.eigenvectors.shape[0])))
    out = np.zeros_like(rho, dtype=complex)
    scale = bath.operator_scale ** 2
    for b in lindblad_set(snap, gap_tol):
        g = scale * bath_gamma(b.omega, bath)
        for j in range(n):
            L = b.operator(j, snap.eigenvectors)
            LdL = L.conj().T @ L
            out += g * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def dissipator(snap: SpectralSnapshot, rho: np.ndarray, bath: BathParams = BathParams(),
               gap_tol: float = GAP_TOL) -> np.ndarray:
    """Same generator as :func:`dissipator_reference`, via the compiled kernel."""
    U = snap.eigenvectors
    n = int(round(np.log2(U.shape[0])))
    return _dissipate(TWO_PI * snap.eigenvalues, U, z_elements(U, n), rho, bath, gap_tol)


def _dissipate(E_ang, U, A, rho, bath, gap_tol):
    r = U.conj().T @ rho @ U
    D = _davies(E_ang, A, np.ascontiguousarray(r, dtype=complex), TWO_PI * gap_tol, bath.beta,
                bath.omega_c_angular, bath.eta_g2 * bath.operator_scale ** 2)
    return U @ D @ U.conj().T


# -- time evolution ------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # s values
    populations: np.ndarray  # (len(times), k)
    final_rho: np.ndarray
    trace: np.ndarray = field(repr=False)
    hermiticity: np.ndarray = field(repr=False)  # max |rho - rho^dagger|
    purity: np.ndarray = field(repr=False)
    min_eigenvalue: np.ndarray = field(repr=False)
    t_anneal: float = 0.0
    nfev: int = 0

    def population(self, level: int, s: float) -> float:
        i = int(np.argmin(np.abs(self.times - s)))
        if abs(self.times[i] - s) > 1e-9:
            raise KeyError(f"s={s} is not on the output grid")
        return float(self.populations[i, level])


def plus_state(n_qubits: int) -> np.ndarray:
    dim = 2 ** n_qubits
    return np.full((dim, dim), 1.0 / dim, dtype=complex)


def output_grid(s_min: float | None = None, n_coarse: int = 101, n_fine: int = 201,
                half_width: float = 0.05, extra=()) -> np.ndarray:
    """Uniform grid on [0, 1] refined with ``n_fine`` points in ``s_min +- half_width``."""
    parts = [np.linspace(0.0, 1.0, n_coarse), np.asarray(extra, float)]
    if s_min is not None:
        parts.append(np.linspace(max(s_min - half_width, 0.0), min(s_min + half_width, 1.0), n_fine))
    return np.unique(np.round(np.concatenate(parts), 12))


def _record(problem, schedule, s_values, rhos, levels, diag):
    pops, tr, herm, pur, mineig = [], [], [], [], []
    for s, rho in zip(s_values, rhos):
        snap = snapshot(problem, schedule, s, k=levels, diag=diag)
        pops.append(snap.populations(rho))
        tr.append(np.trace(rho).real)
        herm.append(np.max(np.abs(rho - rho.conj().T)))
        pur.append(np.real(np.vdot(rho, rho)))
        mineig.append(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    return np.array(pops), np.array(tr), np.array(herm), np.array(pur), np.array(mineig)


def _evolve(problem: IsingProblem, schedule: AnnealSchedule, t_anneal: float, s_out,
            bath: BathParams | None, rho0, levels, gap_tol, rtol, atol,
            generator_levels=None) -> Trajectory:
    if not t_anneal > 0:
        raise ValueError("t_anneal must be positive (ns)")
    s_out = np.asarray(s_out, float)
    if s_out.ndim != 1 or s_out.size == 0 or np.any(np.diff(s_out) <= 0) \
            or s_out[0] < 0 or s_out[-1] > 1:
        raise ValueError("output grid must be strictly increasing inside [0, 1]")
    n = problem.n_qubits
    diag = problem_diagonal(problem)
    dim = diag.size
    rho0 = plus_state(n) if rho0 is None else np.asarray(rho0, complex)
    open_system = bath is not None and bath.eta_g2 > 0
    if generator_levels is not None and not 2 <= generator_levels <= dim:
        raise ValueError(f"generator_levels must lie in 2..{dim}")
    zs = z_diagonals(n)

    def rhs(t, y):
        s = min(t / t_anneal, 1.0)
        rho = y.reshape(dim, dim)
        H = TWO_PI * build_hamiltonian(problem, schedule, s, diag)
        out = -1j * (H @ rho - rho @ H)
        if open_system:
            if generator_levels is None:
                E, U = np.linalg.eigh(H)
            else:
                E, U = sla.eigh(H, subset_by_index=[0, generator_levels - 1])
            A = np.matmul(U.T[None], zs[:, :, None] * U[None])
            out += _dissipate(E, U, A, rho, bath, gap_tol)
        return out.ravel()

    sol = solve_ivp(rhs, (0.0, t_anneal), rho0.ravel(), method="DOP853",
                    t_eval=s_out * t_anneal, rtol=rtol, atol=atol)
    if sol.status != 0:
        s_fail = sol.t[-1] / t_anneal if sol.t.size else 0.0
        raise IntegrationFailure(f"integration stopped near s={s_fail:.6g}: {sol.message}")
    rhos = sol.y.T.reshape(-1, dim, dim)
    pops, tr, herm, pur, mineig = _record(problem, schedule, s_out, rhos, levels, diag)
    return Trajectory(s_out, pops, rhos[-1], tr, herm, pur, mineig, float(t_anneal), int(sol.nfev))


def evolve_closed(problem: IsingProblem, schedule: AnnealSchedule = DEFAULT_SCHEDULE,
                  t_anneal: float = 20.0, s_out=None, rho0=None, levels: int | None = None,
                  rtol: float = RTOL, atol: float = ATOL) -> Trajectory:
    """Integrate ``d rho/dt = -i [2 pi H(t/t_anneal), rho]`` from ``|+><+|``."""
    s_out = output_grid() if s_out is None else s_out
    return _evolve(problem, schedule, t_anneal, s_out, None, rho0, levels, GAP_TOL, rtol, atol)


def evolve_ame(problem: IsingProblem, schedule: AnnealSchedule = DEFAULT_SCHEDULE,
               bath: BathParams = BathParams(), t_anneal: float = 200.0, s_out=None, rho0=None,
               levels: int | None = None, gap_tol: float = GAP_TOL,
               rtol: float = RTOL, atol: float = ATOL,
               generator_levels: int | None = None) -> Trajectory:
    """Adiabatic master equation; the eigenbasis is recomputed at every RHS call.

    ``levels`` limits the reported populations. ``generator_levels`` restricts
    the dissipator to jumps among the lowest levels, which is cheaper for large
    systems but ignores relaxation out of the discarded part of the spectrum.
    """
    if s_out is None:
        s_out = output_grid(min_gap(problem, schedule)[0])
    return _evolve(problem, schedule, t_anneal, s_out, bath, rho0, levels, gap_tol, rtol, atol,
                   generator_levels)


def frozen_generator(problem: IsingProblem, schedule: AnnealSchedule, bath: BathParams, s: float,
                     gap_tol: float = GAP_TOL):
    """Generator at fixed ``s`` restricted to the eigenbasis elements ``r[k, k2]``
    with ``|E_k - E_k2| < gap_tol``.

    Binning makes this block invariant and it holds every population, so the
    coherences between distinct levels (which only oscillate and decay) can be
    dropped without changing the populations. Returns ``(G, index, snapshot)``
    where ``index`` lists the flat ``(k, k2)`` positions of the block.
    """
    snap = snapshot(problem, schedule, s)
    U = snap.eigenvectors
    E = TWO_PI * snap.eigenvalues
    A = z_elements(U, problem.n_qubits)
    dim = E.size
    near = np.abs(snap.eigenvalues[:, None] - snap.eigenvalues[None, :]) < gap_tol
    index = np.flatnonzero(near.ravel())
    args = (TWO_PI * gap_tol, bath.beta, bath.omega_c_angular, bath.eta_g2 * bath.operator_scale ** 2)
    wdiff = (E[:, None] - E[None, :]).ravel()[index]
    G = np.empty((index.size, index.size), complex)
    unit = np.zeros((dim, dim), complex)
    for col, flat in enumerate(index):
        unit.flat[flat] = 1.0
        G[:, col] = _davies(E, A, unit, *args).ravel()[index]
        unit.flat[flat] = 0.0
    G[np.diag_indices_from(G)] -= 1j * wdiff
    return G, index, snap


def evolve_frozen(problem: IsingProblem, schedule: AnnealSchedule, bath: BathParams, s: float,
                  duration: float, t_out=None, rho0=None, gap_tol: float = GAP_TOL):
    """AME with the Hamiltonian pinned at ``s`` for ``duration`` ns.

    The generator is time independent, so populations are propagated exactly
    with the matrix exponential of :func:`frozen_generator`. Returns
    ``(t_out, populations)`` in the eigenbasis of ``H(s)``.
    """
    G, index, snap = frozen_generator(problem, schedule, bath, s, gap_tol)
    U = snap.eigenvectors
    dim = U.shape[0]
    rho0 = plus_state(problem.n_qubits) if rho0 is None else np.asarray(rho0, complex)
    x = (U.conj().T @ rho0 @ U).ravel()[index]
    t_out = np.linspace(0.0, duration, 11) if t_out is None else np.asarray(t_out, float)
    if t_out[0] != 0.0 or np.any(np.diff(t_out) <= 0):
        raise ValueError("t_out must start at 0 and increase")
    diag_pos = np.searchsorted(index, np.arange(dim) * (dim + 1))
    pops = [x[diag_pos].real]
    for dt in np.diff(t_out):
        x = expm(G * dt) @ x
        pops.append(x[diag_pos].real)
    return t_out, np.array(pops)


def transition_rate_profile(problem: IsingProblem, schedule: AnnealSchedule = DEFAULT_SCHEDULE,
                            bath: BathParams = BathParams(), s_grid=None):
    """``(s, gamma_10)`` with ``gamma_10 = gamma(w_10) sum_j |<E_0|Z_j|E_1>|^2`` in 1/ns.

    The operator scale enters squared, exactly as in the dynamics.
    """
    s_grid = np.linspace(0.0, 1.0, 201) if s_grid is None else np.asarray(s_grid, float)
    diag = problem_diagonal(problem)
    out = []
    for s in s_grid:
        snap = snapshot(problem, schedule, s, diag=diag)
        A = z_elements(snap.eigenvectors, problem.n_qubits)
        weight = float(np.sum(A[:, 0, 1] ** 2))
        g = bath.operator_scale ** 2 * bath_gamma(snap.gap, bath) * weight
        out.append((float(s), float(g)))
    return out


@lru_cache(maxsize=16)
def adiabatic_constant(schedule: AnnealSchedule = DEFAULT_SCHEDULE) -> float:
    """``c`` in ``t = c / gap^2`` (ns GHz^2), fixed by the anchor instance."""
    params, t_ref = ADIABATIC_ANCHOR
    _, gap = min_gap(build_pfc(params), schedule)
    return t_ref * gap ** 2


def adiabatic_time_estimate(problem: IsingProblem, schedule: AnnealSchedule = DEFAULT_SCHEDULE,
                            c: float | None = None, gap: float | None = None) -> float:
    """Diagnostic run-time scale ``c / gap_min^2`` in ns."""
    if gap is None:
        _, gap = min_gap(problem, schedule)
    c = adiabatic_constant(schedule) if c is None else c
    return float(c / gap ** 2)


def population_rows(traj: Trajectory, k: int | None = None):
    k = traj.populations.shape[1] if k is None else k
    return [(float(s), *map(float, p[:k])) for s, p in zip(traj.times, traj.populations)]


def manifold_population(traj: Trajectory, first: int, count: int) -> np.ndarray:
    """Summed population of levels ``first .. first + count - 1`` at every output point."""
    return traj.populations[:, first:first + count].sum(axis=1)
