"""Spin-vector Monte Carlo annealing in four flavours.

Each qubit is a classical rotor with polar angle ``theta`` in [0, pi] and,
for the spherical flavours, an azimuth ``phi`` in [-pi, pi]. The energy is

    E = -A(s) sum_j sin(theta_j) [cos(phi_j)] + B(s) [sum h_j cos(theta_j)
                                                   + sum J_jk cos(theta_j) cos(theta_k)]

and rotors are updated one at a time by Metropolis-Hastings in a fresh random
order every sweep. The anneal performs one sweep at each of ``sweeps``
equally spaced values of ``s`` from 0 to 1 inclusive.

Random streams: every sample seeds its own generator from a splitmix64 hash
of ``(seed, repeat, sample)``, so results do not depend on how samples are
split across workers.
"""
from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict

import numba as nb
import numpy as np

from .ising import (AnnealSchedule, DEFAULT_SCHEDULE, IsingProblem, LengthMismatch,
                    config_index, low_energy_census)
from .semiclassical import spin_vector_energy
from .units import beta_ghz

BOOTSTRAP_RESAMPLES = 10_000
# cos(pi/2) evaluates to 6e-17, so equator readouts count as ties below this
TIE_TOL = 1e-12


class SvmcVariant(enum.Enum):
    SVMC = "svmc"
    SVMC_TF = "svmc_tf"
    SPHERICAL_SVMC = "spherical_svmc"
    SPHERICAL_SVMC_TF = "spherical_svmc_tf"

    @property
    def spherical(self) -> bool:
        return self in (SvmcVariant.SPHERICAL_SVMC, SvmcVariant.SPHERICAL_SVMC_TF)

    @property
    def transverse_field_steps(self) -> bool:
        return self in (SvmcVariant.SVMC_TF, SvmcVariant.SPHERICAL_SVMC_TF)


@dataclass
class RotorState:
    theta: np.ndarray
    phi: np.ndarray | None = None

    @classmethod
    def initial(cls, n: int, spherical: bool) -> "RotorState":
        return cls(np.full(n, np.pi / 2), np.zeros(n) if spherical else None)

    def copy(self) -> "RotorState":
        return RotorState(self.theta.copy(), None if self.phi is None else self.phi.copy())


@dataclass(frozen=True)
class CampaignSpec:
    sweeps: int
    n_samples: int = 20_000
    repeats: int = 50
    temperature_mk: float = 12.0
    seed: int = 0

    def __post_init__(self):
        for name in ("sweeps", "n_samples", "repeats"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"CampaignSpec.{name} must be positive")
        if not self.temperature_mk > 0:
            raise ValueError("CampaignSpec.temperature_mk must be positive")

    @property
    def beta(self) -> float:
        return beta_ghz(self.temperature_mk)


def svmc_energy(problem: IsingProblem, schedule: AnnealSchedule, s: float,
                state: RotorState, variant: SvmcVariant) -> float:
    if state.theta.shape != (problem.n_qubits,):
        raise LengthMismatch(
            f"rotor state has {state.theta.shape} angles for {problem.n_qubits} qubits")
    phi = state.phi if variant.spherical else None
    if variant.spherical and phi is None:
        raise ValueError("spherical variants need azimuthal angles")
    return spin_vector_energy(problem, schedule, s, state.theta, phi)


def tf_step_scale(schedule: AnnealSchedule, s: float) -> float:
    return schedule.tf_ratio(s)


# -- numba kernels -------------------------------------------------------------

@nb.njit(cache=True)
def _splitmix64(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15))
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def _stream_seed(seed, repeat, sample):
    h = _splitmix64(np.uint64(seed))
    h = _splitmix64(h ^ np.uint64(repeat))
    h = _splitmix64(h ^ np.uint64(sample))
    return h & np.uint64(0x7FFFFFFF)


@nb.njit(cache=True)
def _wrap_phi(p):
    p = (p + np.pi) % (2.0 * np.pi) - np.pi
    return p


@nb.njit(cache=True)
def _propose(theta_j, phi_j, spherical, tf, scale):
    if tf:
        t = theta_j + scale * np.random.uniform(-np.pi, np.pi)
        if t < 0.0:
            t = -t
        elif t > np.pi:
            t = 2.0 * np.pi - t
        p = phi_j
        if spherical:
            p = _wrap_phi(phi_j + scale * np.random.uniform(-np.pi, np.pi))
    else:
        t = np.random.uniform(0.0, np.pi)
        p = phi_j
        if spherical:
            p = np.random.uniform(-np.pi, np.pi)
    return t, p


@nb.njit(cache=True)
def _sweep(theta, phi, cos_t, h, nbr_ptr, nbr_idx, nbr_val, a, b, beta,
           spherical, tf, scale):
    n = theta.shape[0]
    order = np.random.permutation(n)
    accepted = 0
    for jj in range(n):
        j = order[jj]
        t_new, p_new = _propose(theta[j], phi[j], spherical, tf, scale)
        field = h[j]
        for q in range(nbr_ptr[j], nbr_ptr[j + 1]):
            field += nbr_val[q] * cos_t[nbr_idx[q]]
        c_new = np.cos(t_new)
        if spherical:
            x_old = np.sin(theta[j]) * np.cos(phi[j])
            x_new = np.sin(t_new) * np.cos(p_new)
        else:
            x_old = np.sin(theta[j])
            x_new = np.sin(t_new)
        dE = -a * (x_new - x_old) + b * (c_new - cos_t[j]) * field
        if dE <= 0.0 or np.random.random() < np.exp(-beta * dE):
            theta[j] = t_new
            phi[j] = p_new
            cos_t[j] = c_new
            accepted += 1
    return accepted


@nb.njit(cache=True)
def _readout(theta):
    n = theta.shape[0]
    out = np.empty(n, np.int8)
    for j in range(n):
        c = np.cos(theta[j])
        if c > TIE_TOL:
            out[j] = 1
        elif c < -TIE_TOL:
            out[j] = -1
        else:
            out[j] = 1 if np.random.random() < 0.5 else -1
    return out


@nb.njit(cache=True)
def _anneal_batch(h, nbr_ptr, nbr_idx, nbr_val, a_vals, b_vals, scales, beta,
                  spherical, tf, freeze_phi, seed, repeat, sample_start, n_samples):
    n = h.shape[0]
    spins = np.empty((n_samples, n), np.int8)
    thetas = np.empty((n_samples, n))
    phis = np.empty((n_samples, n))
    for m in range(n_samples):
        np.random.seed(_stream_seed(seed, repeat, sample_start + m))
        theta = np.full(n, np.pi / 2)
        phi = np.zeros(n)
        cos_t = np.cos(theta)
        sph = spherical and not freeze_phi
        for k in range(a_vals.shape[0]):
            _sweep(theta, phi, cos_t, h, nbr_ptr, nbr_idx, nbr_val,
                   a_vals[k], b_vals[k], beta, sph, tf, scales[k])
        spins[m] = _readout(theta)
        thetas[m] = theta
        phis[m] = phi
    return spins, thetas, phis


@nb.njit(cache=True)
def _fixed_s_chain(h, nbr_ptr, nbr_idx, nbr_val, a, b, scale, beta, spherical, tf,
                   seed, burn_in, n_records, thin):
    n = h.shape[0]
    np.random.seed(_stream_seed(seed, 0, 0))
    theta = np.full(n, np.pi / 2)
    phi = np.zeros(n)
    cos_t = np.cos(theta)
    for _ in range(burn_in):
        _sweep(theta, phi, cos_t, h, nbr_ptr, nbr_idx, nbr_val, a, b, beta, spherical, tf, scale)
    thetas = np.empty((n_records, n))
    accepted = 0
    for r in range(n_records):
        for _ in range(thin):
            accepted += _sweep(theta, phi, cos_t, h, nbr_ptr, nbr_idx, nbr_val,
                               a, b, beta, spherical, tf, scale)
        thetas[r] = theta
    return thetas, accepted


# -- python surface ----------------------------------------------------------------

def _neighbours(problem: IsingProblem):
    n = problem.n_qubits
    rows = [[] for _ in range(n)]
    for (i, j), v in problem.J.items():
        rows[i].append((j, v))
        rows[j].append((i, v))
    ptr = np.zeros(n + 1, np.int64)
    idx, val = [], []
    for i, r in enumerate(rows):
        ptr[i + 1] = ptr[i] + len(r)
        idx.extend(k for k, _ in r)
        val.extend(v for _, v in r)
    return ptr, np.array(idx, np.int64), np.array(val, float)


def s_grid(sweeps: int) -> np.ndarray:
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if sweeps == 1:
        return np.zeros(1)
    return np.arange(sweeps) / (sweeps - 1)


def _schedule_arrays(schedule: AnnealSchedule, sweeps: int, s_stop: float = 1.0):
    s = s_grid(sweeps)
    s = s[s <= s_stop + 1e-12]
    a = np.array([schedule.A(x) for x in s], float)
    b = np.array([schedule.B(x) for x in s], float)
    scale = np.array([schedule.tf_ratio(x) for x in s], float)
    return a, b, scale


def propose(variant: SvmcVariant, state: RotorState, j: int, s: float,
            rng: np.random.Generator, schedule: AnnealSchedule = DEFAULT_SCHEDULE):
    """Draw proposed ``(theta', phi')`` for qubit ``j``.

    Python-level mirror of the compiled proposal rule; the compiled kernels
    draw from their own per-sample streams.
    """
    theta = state.theta[j]
    phi = 0.0 if state.phi is None else state.phi[j]
    if variant.transverse_field_steps:
        scale = schedule.tf_ratio(s)
        t = theta + scale * rng.uniform(-np.pi, np.pi)
        if t < 0:
            t = -t
        elif t > np.pi:
            t = 2 * np.pi - t
        p = phi
        if variant.spherical:
            p = (phi + scale * rng.uniform(-np.pi, np.pi) + np.pi) % (2 * np.pi) - np.pi
    else:
        t = rng.uniform(0, np.pi)
        p = rng.uniform(-np.pi, np.pi) if variant.spherical else phi
    return float(t), float(p)


def metropolis_sweep(problem: IsingProblem, schedule: AnnealSchedule, s: float,
                     state: RotorState, variant: SvmcVariant, beta: float,
                     rng: np.random.Generator) -> tuple[RotorState, int]:
    """One Metropolis sweep in a random permutation order (pure-python reference path)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    n = problem.n_qubits
    state = state.copy()
    if variant.spherical and state.phi is None:
        state.phi = np.zeros(n)
    hv = problem.h_vector
    Jm = problem.J_matrix
    a, b = schedule.A(s), schedule.B(s)
    accepted = 0
    for j in rng.permutation(n):
        t_new, p_new = propose(variant, state, j, s, rng, schedule)
        field = hv[j] + Jm[j] @ np.cos(state.theta)
        if variant.spherical:
            x_old = np.sin(state.theta[j]) * np.cos(state.phi[j])
            x_new = np.sin(t_new) * np.cos(p_new)
        else:
            x_old, x_new = np.sin(state.theta[j]), np.sin(t_new)
        dE = -a * (x_new - x_old) + b * (np.cos(t_new) - np.cos(state.theta[j])) * field
        if dE <= 0 or rng.random() < np.exp(-beta * dE):
            state.theta[j] = t_new
            if variant.spherical:
                state.phi[j] = p_new
            accepted += 1
    return state, accepted


def readout(state: RotorState, rng: np.random.Generator) -> np.ndarray:
    c = np.cos(state.theta)
    out = np.where(c > 0, 1, -1).astype(np.int8)
    ties = np.abs(c) <= TIE_TOL
    if ties.any():
        out[ties] = np.where(rng.random(int(ties.sum())) < 0.5, 1, -1)
    return out


def anneal_samples(problem: IsingProblem, variant: SvmcVariant, sweeps: int,
                   n_samples: int, beta: float, seed: int = 0, repeat: int = 0,
                   sample_start: int = 0, schedule: AnnealSchedule = DEFAULT_SCHEDULE,
                   freeze_phi: bool = False, return_angles: bool = False,
                   s_stop: float = 1.0):
    """Run ``n_samples`` independent anneals and return their readouts.

    ``freeze_phi`` pins the azimuth of a spherical variant at zero, which must
    reproduce the planar statistics. ``s_stop < 1`` ends the anneal after the
    last grid point not beyond it, for mid-anneal readouts.
    """
    ptr, idx, val = _neighbours(problem)
    a, b, scale = _schedule_arrays(schedule, sweeps, s_stop)
    spins, thetas, phis = _anneal_batch(
        problem.h_vector, ptr, idx, val, a, b, scale, float(beta),
        variant.spherical, variant.transverse_field_steps, freeze_phi,
        np.uint64(seed), np.uint64(repeat), np.uint64(sample_start), int(n_samples))
    if return_angles:
        return spins, thetas, phis
    return spins


def run_anneal(problem: IsingProblem, variant: SvmcVariant, spec: CampaignSpec,
               sample: int = 0, repeat: int = 0,
               schedule: AnnealSchedule = DEFAULT_SCHEDULE) -> RotorState:
    """Single anneal from the ``theta = pi/2, phi = 0`` state; returns the final rotors."""
    _, thetas, phis = anneal_samples(problem, variant, spec.sweeps, 1, spec.beta, spec.seed,
                                     repeat, sample, schedule, return_angles=True)
    return RotorState(thetas[0], phis[0] if variant.spherical else None)


def fixed_s_chain(problem: IsingProblem, variant: SvmcVariant, s: float, beta: float,
                  n_records: int, burn_in: int = 1000, thin: int = 1, seed: int = 0,
                  schedule: AnnealSchedule = DEFAULT_SCHEDULE):
    """Long Metropolis run at frozen ``s``; returns recorded polar angles and acceptances."""
    ptr, idx, val = _neighbours(problem)
    return _fixed_s_chain(problem.h_vector, ptr, idx, val, schedule.A(s), schedule.B(s),
                          schedule.tf_ratio(s), float(beta), variant.spherical,
                          variant.transverse_field_steps, np.uint64(seed),
                          int(burn_in), int(n_records), int(thin))


# -- campaigns ----------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    median: float
    lo: float
    hi: float


def bootstrap_median(values, n_resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0,
                     level: float = 0.95) -> Estimate:
    """Median of ``values`` with a percentile-bootstrap interval for the median."""
    values = np.asarray(values, float)
    med = float(np.median(values))
    if values.size == 1:
        return Estimate(med, med, med)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, values.size, size=(n_resamples, values.size))
    meds = np.median(values[picks], axis=1)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(meds, [alpha, 1 - alpha])
    return Estimate(med, float(lo), float(hi))


@dataclass(frozen=True)
class CampaignResult:
    variant: SvmcVariant
    spec: CampaignSpec
    p_ground: Estimate
    p_manifold: Estimate
    ground_fractions: np.ndarray
    manifold_fractions: np.ndarray
    state_counts: np.ndarray  # histogram over basis states, all repeats pooled

    def csv_row(self, params=None):
        p = params
        return (self.variant.value,
                getattr(p, "M", ""), getattr(p, "R", ""), getattr(p, "d", ""),
                self.spec.sweeps,
                self.p_ground.median, self.p_ground.lo, self.p_ground.hi,
                self.p_manifold.median, self.p_manifold.lo, self.p_manifold.hi,
                self.spec.n_samples, self.spec.repeats, self.spec.seed)


CAMPAIGN_CSV_COLUMNS = ("variant", "M", "R", "d", "sweeps",
                        "P_ground_median", "P_ground_lo", "P_ground_hi",
                        "P_manifold_median", "P_manifold_lo", "P_manifold_hi",
                        "n_samples", "repeats", "seed")


def _repeat_job(args):
    problem, variant, spec, repeat, schedule, freeze_phi, s_stop = args
    spins = anneal_samples(problem, variant, spec.sweeps, spec.n_samples, spec.beta,
                           spec.seed, repeat, 0, schedule, freeze_phi, s_stop=s_stop)
    weights = 1 << np.arange(problem.n_qubits - 1, -1, -1)
    return ((spins < 0).astype(np.int64) @ weights)


def campaign(problem: IsingProblem, variant: SvmcVariant, spec: CampaignSpec,
             schedule: AnnealSchedule = DEFAULT_SCHEDULE, workers: int = 1,
             freeze_phi: bool = False, s_stop: float = 1.0) -> CampaignResult:
    """``repeats`` batches of ``n_samples`` anneals, bootstrapped over the repeats."""
    census = low_energy_census(problem)
    ground = config_index(census.ground)
    manifold = np.array([config_index(c) for c in census.first_excited])
    jobs = [(problem, variant, spec, r, schedule, freeze_phi, s_stop) for r in range(spec.repeats)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_repeat_job, jobs))
    else:
        results = [_repeat_job(j) for j in jobs]
    dim = 2 ** problem.n_qubits
    counts = np.zeros(dim, np.int64)
    g_frac = np.empty(spec.repeats)
    m_frac = np.empty(spec.repeats)
    for r, idx in enumerate(results):
        c = np.bincount(idx, minlength=dim)
        counts += c
        g_frac[r] = c[ground] / spec.n_samples
        m_frac[r] = c[manifold].sum() / spec.n_samples
    return CampaignResult(variant, spec,
                          bootstrap_median(g_frac, seed=spec.seed),
                          bootstrap_median(m_frac, seed=spec.seed + 1),
                          g_frac, m_frac, counts)


def spec_dict(spec: CampaignSpec) -> dict:
    return asdict(spec)
