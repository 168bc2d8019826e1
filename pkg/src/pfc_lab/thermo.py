"""Exact classical thermodynamics of the PFC by the transfer-matrix method.

Each two-qubit subsystem has four states, ordered as (s_a, s_b) =
(+1, +1), (-1, +1), (+1, -1), (-1, -1). With this ordering the boundary
vector carries half of each end subsystem's on-site energy and the
transfer matrix carries the backbone coupling plus half of both on-site
energies, so ``Z = v W^(M-1) v^T`` reproduces the brute-force Gibbs sum
(checked in the test-suite).

``beta`` is an inverse energy in GHz^-1 throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .ising import PfcParams, all_configs, build_pfc, MAX_ENUMERATION_QUBITS, TooLarge

LOG_DOMAIN_THRESHOLD = 30.0

SUBSYSTEM_STATES = np.array([[1, 1], [-1, 1], [1, -1], [-1, -1]])
SUBSYSTEM_MAG = SUBSYSTEM_STATES.mean(axis=1).astype(float)  # 1/2 (s_a + s_b)


class Overflow(ArithmeticError):
    pass


def _check_beta(beta):
    if not beta > 0 or not np.isfinite(beta):
        raise ValueError(f"beta must be positive and finite, got {beta!r}")


def log_transfer_pair(params: PfcParams, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Natural logs of the boundary vector and transfer matrix entries."""
    _check_beta(beta)
    x = beta * params.R
    d = params.d
    log_v = 0.5 * x * np.array([d + 1, d - 3, 1 - d, 1 - d])
    log_W = x * np.array([
        [d + 2, d, 0, 0],
        [d, d - 2, -2, -2],
        [0, -2, 2 - d, 2 - d],
        [0, -2, 2 - d, 2 - d],
    ])
    return log_v, log_W


@dataclass(frozen=True)
class TransferPair:
    v: np.ndarray
    W: np.ndarray
    beta: float
    params: PfcParams


def transfer_pair(params: PfcParams, beta: float) -> TransferPair:
    log_v, log_W = log_transfer_pair(params, beta)
    if log_W.max() > 700:
        raise Overflow(
            f"beta*R = {beta * params.R:g} overflows the transfer matrix; "
            "use log_partition_function")
    return TransferPair(np.exp(log_v), np.exp(log_W), beta, params)


def _scaled_sweep(log_v, log_W, steps):
    """Vectors ``v W^k`` for k = 0..steps, each normalised, with cumulative log scales."""
    shift = log_W.max()
    Wt = np.exp(log_W - shift)
    vmax = log_v.max()
    x = np.exp(log_v - vmax)
    vecs = [x]
    logs = [vmax]
    acc = vmax
    for _ in range(steps):
        x = x @ Wt
        norm = x.max()
        x = x / norm
        acc += shift + np.log(norm)
        vecs.append(x)
        logs.append(acc)
    return vecs, logs


def log_partition_function(params: PfcParams, beta: float) -> float:
    """``ln Z`` evaluated with rescaled products, usable at any finite beta."""
    log_v, log_W = log_transfer_pair(params, beta)
    vecs, logs = _scaled_sweep(log_v, log_W, params.M - 1)
    tail = vecs[-1] @ np.exp(log_v - log_v.max())
    return float(logs[-1] + log_v.max() + np.log(tail))


def partition_function(params: PfcParams, beta: float, log: bool = False) -> float:
    """Partition function ``Z = v W^(M-1) v^T``.

    Direct matrix powers are used while ``beta*R <= 30``; above that the
    evaluation switches to rescaled products. With ``log=True`` the natural
    log of Z is returned, which never overflows.
    """
    if log:
        return log_partition_function(params, beta)
    if beta * params.R > LOG_DOMAIN_THRESHOLD:
        lz = log_partition_function(params, beta)
        if lz > 709:
            raise Overflow(f"Z overflows at beta*R = {beta * params.R:g}; request log=True")
        return float(np.exp(lz))
    tp = transfer_pair(params, beta)
    return float(tp.v @ np.linalg.matrix_power(tp.W, params.M - 1) @ tp.v)


def subsystem_magnetization(params: PfcParams, beta: float, i: int) -> float:
    """Thermal ``<1/2 (s_a,i + s_b,i)>`` for subsystem ``i`` (1-based)."""
    M = params.M
    if not 1 <= i <= M:
        raise IndexError(f"subsystem index {i} outside 1..{M}")
    return float(_all_subsystem_mags(params, beta)[i - 1])


def _all_subsystem_mags(params: PfcParams, beta: float) -> np.ndarray:
    log_v, log_W = log_transfer_pair(params, beta)
    M = params.M
    left, _ = _scaled_sweep(log_v, log_W, M - 1)
    # W is symmetric, so W^k v^T is the transpose of v W^k.
    right = left
    out = np.empty(M)
    for i in range(1, M + 1):
        lv, rv = left[i - 1], right[M - i]
        out[i - 1] = (lv * SUBSYSTEM_MAG) @ rv / (lv @ rv)
    return out


def average_magnetization(params: PfcParams, beta: float) -> float:
    return float(_all_subsystem_mags(params, beta).mean())


def spectral_radius(W) -> float:
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise ValueError("spectral_radius: matrix has non-finite entries")
    return float(np.max(np.abs(np.linalg.eigvals(W))))


def log_lambda1(params: PfcParams, beta: float) -> float:
    """Natural log of the closed-form largest eigenvalue of W.

    lambda_1 = p + sqrt(p^2 - 4 sinh(4x)), p = e^{2x} cosh(x d) + cosh(x (2 - d)),
    x = beta R, evaluated after factoring out e^{x (2 + d)}.
    """
    _check_beta(beta)
    x = beta * params.R
    d = params.d
    m = x * (2 + d)
    p = 0.5 * (1 + 2 * np.exp(-2 * x * d) + np.exp(-4 * x))
    disc = p * p - 2 * np.exp(-2 * x * d) * (-np.expm1(-8 * x))
    return float(m + np.log(p + np.sqrt(disc)))


def lambda1(params: PfcParams, beta: float) -> float:
    return float(np.exp(log_lambda1(params, beta)))


def free_energy(params: PfcParams, beta: float) -> float:
    """Free energy per subsystem in the infinite-chain limit, ``-ln(lambda_1)/beta``."""
    return -log_lambda1(params, beta) / beta


# -- brute-force oracle -----------------------------------------------------

def _gibbs_enumeration(params: PfcParams, beta: float):
    n = params.n_qubits
    if n > MAX_ENUMERATION_QUBITS:
        raise TooLarge(f"{n} qubits exceeds enumeration bound {MAX_ENUMERATION_QUBITS}")
    problem = build_pfc(params)
    configs = all_configs(n)
    logw = -beta * problem.energies(configs)
    return configs, logw


def brute_log_partition(params: PfcParams, beta: float) -> float:
    _, logw = _gibbs_enumeration(params, beta)
    return float(logsumexp(logw))


def brute_subsystem_magnetization(params: PfcParams, beta: float, i: int) -> float:
    configs, logw = _gibbs_enumeration(params, beta)
    p = np.exp(logw - logsumexp(logw))
    M = params.M
    obs = 0.5 * (configs[:, i - 1] + configs[:, M + i - 1])
    return float(p @ obs)


def brute_average_magnetization(params: PfcParams, beta: float) -> float:
    configs, logw = _gibbs_enumeration(params, beta)
    p = np.exp(logw - logsumexp(logw))
    return float(p @ configs.mean(axis=1))


def gibbs_distribution(problem, beta: float) -> np.ndarray:
    """Classical Gibbs probabilities of every basis state of ``problem``."""
    from .ising import diagonal_energies
    logw = -beta * diagonal_energies(problem)
    return np.exp(logw - logsumexp(logw))


THERMO_CSV_COLUMNS = ("M", "R", "d", "beta", "logZ", "F", "avg_mag")


def thermo_rows(params_list, betas):
    """Rows for the thermodynamics table; ``Z`` is always reported as ``ln Z``."""
    rows = []
    for p in params_list:
        for b in betas:
            rows.append((p.M, p.R, p.d, b, log_partition_function(p, b),
                         free_energy(p, b), average_magnetization(p, b)))
    return rows
