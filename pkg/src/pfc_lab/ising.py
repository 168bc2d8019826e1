"""Ising problems, the perturbed ferromagnetic chain builder and anneal schedules.

Energies are in GHz. Spin value +1 corresponds to the computational state
|0>, so the PFC ground state is the all-(+1) configuration.

Qubit ordering for a PFC with M subsystems is (a_1..a_M, b_1..b_M): the M
auxiliary qubits first, then the M backbone qubits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

MAX_ENUMERATION_QUBITS = 24


class InvalidParams(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class PfcParams:
    M: int
    R: float = 1.0
    d: float = 0.1

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise InvalidParams(f"PfcParams.M must be an integer >= 2, got {self.M!r}")
        if not self.R > 0:
            raise InvalidParams(f"PfcParams.R must be > 0, got {self.R!r}")
        if not 0 < self.d < 1:
            raise InvalidParams(f"PfcParams.d must lie in (0, 1), got {self.d!r}")

    @property
    def n_qubits(self) -> int:
        return 2 * self.M


@dataclass(frozen=True)
class IsingProblem:
    """Classical Ising problem ``sum_i h_i s_i + sum_{i<j} J_ij s_i s_j``.

    ``h`` maps qubit index to bias, ``J`` maps an ordered pair ``(i, j)`` with
    ``i < j`` to a coupling. Pairs given as ``(j, i)`` are normalised on
    construction and repeated pairs are summed.
    """

    n_qubits: int
    h: dict = field(default_factory=dict)
    J: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        n = self.n_qubits
        if n < 1:
            raise InvalidParams("n_qubits must be positive")
        h = {}
        for i, v in self.h.items():
            i = int(i)
            if not 0 <= i < n:
                raise InvalidParams(f"bias index {i} out of range for {n} qubits")
            h[i] = h.get(i, 0.0) + float(v)
        J = {}
        for (i, j), v in self.J.items():
            i, j = int(i), int(j)
            if i == j:
                raise InvalidParams(f"self-coupling on qubit {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidParams(f"coupler ({i}, {j}) out of range for {n} qubits")
            key = (min(i, j), max(i, j))
            J[key] = J.get(key, 0.0) + float(v)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "J", J)

    @property
    def h_vector(self) -> np.ndarray:
        out = np.zeros(self.n_qubits)
        for i, v in self.h.items():
            out[i] = v
        return out

    @property
    def J_matrix(self) -> np.ndarray:
        """Symmetric coupling matrix with zero diagonal (each pair stored twice)."""
        out = np.zeros((self.n_qubits, self.n_qubits))
        for (i, j), v in self.J.items():
            out[i, j] = v
            out[j, i] = v
        return out

    def energies(self, configs: np.ndarray) -> np.ndarray:
        """Vectorised classical energies for an ``(n_configs, n_qubits)`` array of spins."""
        configs = np.atleast_2d(np.asarray(configs, dtype=float))
        if configs.shape[1] != self.n_qubits:
            raise LengthMismatch(
                f"config length {configs.shape[1]} != n_qubits {self.n_qubits}")
        e = configs @ self.h_vector
        for (i, j), v in self.J.items():
            e = e + v * configs[:, i] * configs[:, j]
        return e

    def to_json(self) -> str:
        return json.dumps({
            "n_qubits": self.n_qubits,
            "h": [[i, v] for i, v in sorted(self.h.items())],
            "J": [[i, j, v] for (i, j), v in sorted(self.J.items())],
            "label": self.label,
        })

    @classmethod
    def from_json(cls, text: str) -> "IsingProblem":
        data = json.loads(text)
        return cls(
            n_qubits=int(data["n_qubits"]),
            h={int(i): float(v) for i, v in data.get("h", [])},
            J={(int(i), int(j)): float(v) for i, j, v in data.get("J", [])},
            label=data.get("label", ""),
        )


def aux_index(M: int, i: int) -> int:
    """Qubit index of auxiliary qubit a_i (0-based i)."""
    return i


def backbone_index(M: int, i: int) -> int:
    """Qubit index of backbone qubit b_i (0-based i)."""
    return M + i


def build_pfc(params: PfcParams) -> IsingProblem:
    """Build the perturbed ferromagnetic chain as an :class:`IsingProblem`."""
    M, R, d = params.M, params.R, params.d
    h = {}
    J = {}
    for i in range(M):
        a, b = aux_index(M, i), backbone_index(M, i)
        h[a] = -R
        h[b] = R * (1 - d)
        J[(a, b)] = -R
    for i in range(M - 1):
        J[(backbone_index(M, i), backbone_index(M, i + 1))] = -R
    return IsingProblem(2 * M, h, J, label=f"PFC(M={M}, R={R:g}, d={d:g})")


def classical_energy(problem: IsingProblem, config) -> float:
    config = np.asarray(config)
    if config.ndim != 1 or config.shape[0] != problem.n_qubits:
        raise LengthMismatch(
            f"config length {config.shape} does not match {problem.n_qubits} qubits")
    return float(problem.energies(config[None, :])[0])


def hamming(a, b) -> int:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def all_configs(n: int) -> np.ndarray:
    """All 2^n spin configurations, row k is basis state k.

    Bit ``n-1-j`` of ``k`` set means qubit j is in |1>, i.e. spin -1; this
    matches the Kronecker ordering used for the dense Hamiltonians.
    """
    if n > MAX_ENUMERATION_QUBITS:
        raise TooLarge(f"{n} qubits exceeds enumeration bound {MAX_ENUMERATION_QUBITS}")
    k = np.arange(2 ** n)[:, None]
    bits = (k >> np.arange(n - 1, -1, -1)[None, :]) & 1
    return (1 - 2 * bits).astype(np.int8)


def config_index(config) -> int:
    """Computational basis index of a spin configuration (inverse of :func:`all_configs`)."""
    idx = 0
    for s in np.asarray(config):
        idx = (idx << 1) | (1 if s < 0 else 0)
    return idx


def diagonal_energies(problem: IsingProblem) -> np.ndarray:
    """Classical energy of every computational basis state, in basis order."""
    return problem.energies(all_configs(problem.n_qubits))


@dataclass(frozen=True)
class Census:
    ground: np.ndarray
    ground_energy: float
    first_excited: list
    first_excited_energy: float
    gap: float
    n_ground: int


def low_energy_census(problem: IsingProblem) -> Census:
    """Exhaustive enumeration of the ground level and first excited level.

    Levels are grouped with a tolerance relative to the problem's energy scale
    so that sums of floating point couplings that are equal in exact
    arithmetic land in the same level.
    """
    n = problem.n_qubits
    if n > MAX_ENUMERATION_QUBITS:
        raise TooLarge(f"{n} qubits exceeds enumeration bound {MAX_ENUMERATION_QUBITS}")
    configs = all_configs(n)
    e = problem.energies(configs)
    scale = max(1.0, float(np.max(np.abs(e))))
    tol = 1e-9 * scale
    e0 = float(e.min())
    ground_mask = e <= e0 + tol
    rest = e[~ground_mask]
    e1 = float(rest.min())
    first_mask = np.abs(e - e1) <= tol
    ground_rows = configs[ground_mask]
    return Census(
        ground=ground_rows[0].astype(int),
        ground_energy=e0,
        first_excited=[c.astype(int) for c in configs[first_mask]],
        first_excited_energy=e1,
        gap=e1 - e0,
        n_ground=int(ground_mask.sum()),
    )


def _linear_A(s):
    return 3.0 * (1.0 - s)


def _linear_B(s):
    return 3.0 * s


@dataclass(frozen=True)
class AnnealSchedule:
    """Annealing schedule pair ``A(s)``, ``B(s)`` in GHz. Defaults to ``3(1-s)``, ``3s``."""

    A: Callable[[float], float] = None
    B: Callable[[float], float] = None
    name: str = "linear3"

    def __post_init__(self):
        if self.A is None:
            # module-level functions keep the default schedule picklable for worker pools
            object.__setattr__(self, "A", _linear_A)
        if self.B is None:
            object.__setattr__(self, "B", _linear_B)

    def tf_ratio(self, s: float) -> float:
        """``min(A(s)/B(s), 1)``, taken as 1 where ``B(s) == 0``."""
        b = self.B(s)
        if b <= 0:
            return 1.0
        return min(self.A(s) / b, 1.0)


DEFAULT_SCHEDULE = AnnealSchedule()


def spin_configs_equal(a: Iterable, b: Iterable) -> bool:
    return bool(np.array_equal(np.asarray(a), np.asarray(b)))
