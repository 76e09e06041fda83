"""Sparse Pauli dynamics: Heisenberg propagation of a weighted Pauli sum with
a cap on the number of retained paths.

Paths are stored as Hermitian Paulis (phase ``i^{#Y}``) with complex weights,
so a Hermitian observable keeps real weights throughout.  Each rotation angle
is split into a Clifford part ``k pi/2``, applied by conjugation, and a
residual ``|theta'| <= pi/4`` that branches every anticommuting path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, NamedClifford, PauliInsertion, PauliRotation
from .noise import PauliNoiseChannel
from .pauli import PauliArray, PauliObservable, PauliString
from .stabilizer import conjugate_clifford, conjugate_rotation

HALF_PI = math.pi / 2
RESIDUAL_SNAP = 1e-12
ZERO_WEIGHT = 1e-15


def split_angle(theta: float) -> tuple[float, int]:
    """``theta = residual + k pi/2 (mod 2 pi)`` with ``|residual| <= pi/4``;
    at ``|residual| = pi/4`` the smaller ``k`` is chosen."""
    k = math.ceil(theta / HALF_PI - 0.5)
    residual = theta - k * HALF_PI
    if abs(residual) < RESIDUAL_SNAP:
        residual = 0.0
    return residual, k % 4


@dataclass(frozen=True)
class TruncationPolicy:
    """Keep at most ``m_max`` paths, largest ``|weight|`` first, ties broken
    by ascending ``(x_bits, z_bits)``.  ``m_max=None`` disables truncation."""

    m_max: int | None = None

    def __post_init__(self):
        if self.m_max is not None and self.m_max < 1:
            raise ValueError("m_max must be >= 1")


@dataclass
class PauliPathSet:
    """Weighted Hermitian Paulis ``sum_Q a_Q Q``; mutable scratch object."""

    paulis: PauliArray
    weights: np.ndarray

    @classmethod
    def from_observable(cls, o: PauliObservable) -> "PauliPathSet":
        strings, weights = [], []
        for p, c in o:
            herm = p.hermitian()
            # X^x Z^z = i^{-#Y} * herm
            strings.append(herm)
            weights.append(c * 1j ** (-p.n_y))
        return cls(PauliArray.from_strings(strings, o.n_qubits), np.array(weights, dtype=complex)).merged()

    @property
    def n_qubits(self) -> int:
        return self.paulis.n_qubits

    def __len__(self) -> int:
        return len(self.weights)

    def _normalize_phase(self) -> None:
        """Fold any phase beyond ``i^{#Y}`` into the weights."""
        ny = np.zeros(len(self.paulis), dtype=np.int64)
        for w in range(self.paulis.x.shape[1]):
            ny += np.bitwise_count(self.paulis.x[:, w] & self.paulis.z[:, w]).astype(np.int64)
        rel = (self.paulis.phase.astype(np.int64) - ny) & 3
        if np.any(rel):
            self.weights = self.weights * (1j ** rel)
            self.paulis.phase[:] = (ny & 3).astype(np.uint8)

    def merged(self) -> "PauliPathSet":
        """Sum weights of equal Paulis and drop zero weights."""
        if len(self) == 0:
            return self
        keys = self.paulis.keys()
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        w = np.zeros(len(uniq), dtype=complex)
        np.add.at(w, inv.ravel(), self.weights)
        arr = self.paulis.take(first)
        keep = np.abs(w) > ZERO_WEIGHT
        return PauliPathSet(arr.take(np.flatnonzero(keep)), w[keep])

    def truncated(self, policy: TruncationPolicy) -> "PauliPathSet":
        if policy.m_max is None or len(self) <= policy.m_max:
            return self
        W = self.paulis.x.shape[1]
        keys = [self.paulis.z[:, i] for i in range(W)] + [self.paulis.x[:, i] for i in range(W)]
        order = np.lexsort(keys + [-np.abs(self.weights)])[: policy.m_max]
        return PauliPathSet(self.paulis.take(order), self.weights[order])

    def as_dict(self) -> dict[PauliString, complex]:
        return {p: complex(w) for p, w in zip(self.paulis.to_strings(), self.weights)}

    def to_observable(self) -> PauliObservable:
        return PauliObservable.from_paulis(list(zip(self.paulis.to_strings(), self.weights)), self.n_qubits)

    def l2_norm_sq(self) -> float:
        return float(np.sum(np.abs(self.weights) ** 2))

    def readout(self, initial: int = 0) -> float:
        total = complex(np.sum(self.weights * self.paulis.basis_expectation(initial)))
        if abs(total.imag) > 1e-9:
            raise ValueError("expectation has an imaginary part")
        return total.real


def propagate_clifford(paths: PauliPathSet, g) -> PauliPathSet:
    """``C^dag Q C`` for every path; count unchanged."""
    arr = paths.paulis.copy()
    if isinstance(g, NamedClifford):
        conjugate_clifford(arr, g, heisenberg=True)
    elif isinstance(g, PauliInsertion):
        arr.conj_pauli(g.pauli)
    elif isinstance(g, PauliRotation) and g.clifford_k is not None:
        conjugate_rotation(arr, g.axis, g.clifford_k, heisenberg=True)
    else:
        raise ValueError(f"not a Clifford gate: {g!r}")
    out = PauliPathSet(arr, paths.weights.copy())
    out._normalize_phase()
    return out


def propagate_rotation(
    paths: PauliPathSet, axis: PauliString, theta: float, policy: TruncationPolicy = TruncationPolicy()
) -> PauliPathSet:
    """Back-propagate through ``exp(-i theta P / 2)``.

    Anticommuting ``Q`` maps to ``cos Q + i sin P Q`` for the residual angle;
    colliding Paulis are merged, then the set is truncated to ``policy``.
    """
    residual, k = split_angle(theta)
    arr = paths.paulis.copy()
    weights = paths.weights.copy()
    if k:
        conjugate_rotation(arr, axis, k, heisenberg=True)
    if residual != 0.0:
        anti = np.flatnonzero(arr.anticommutes_with(axis))
        if len(anti):
            spawn = arr.take(anti)
            spawn.left_multiply(axis)
            spawn.add_phase(1)
            spawn_w = math.sin(residual) * weights[anti]
            weights[anti] *= math.cos(residual)
            arr = PauliArray.concat([arr, spawn])
            weights = np.concatenate([weights, spawn_w])
    out = PauliPathSet(arr, weights)
    out._normalize_phase()
    return out.merged().truncated(policy)


def _damp(paths: PauliPathSet, ch: PauliNoiseChannel) -> PauliPathSet:
    out = PauliPathSet(paths.paulis, paths.weights * ch.damping_rows(paths.paulis))
    return out.merged()


class PathBudgetExceeded(RuntimeError):
    """Untruncated propagation grew past its live-path cap."""


@dataclass
class SpdResult:
    value: float
    path_counts: list[int] = field(default_factory=list)
    final_paths: PauliPathSet | None = None

    @property
    def max_paths(self) -> int:
        return max(self.path_counts, default=0)


def spd_run(
    c: Circuit,
    o: PauliObservable,
    initial: int = 0,
    policy: TruncationPolicy = TruncationPolicy(),
    max_live: int | None = None,
) -> SpdResult:
    """Propagate ``o`` backward through ``c`` and record the live path count
    after every rotation.  Noise slots apply their damping factors.

    ``max_live`` aborts with ``PathBudgetExceeded`` once more paths are live,
    which lets callers try exact propagation before a costlier fallback.
    """
    if c.n_qubits != o.n_qubits:
        raise ValueError("circuit and observable widths differ")
    paths = PauliPathSet.from_observable(o)
    counts = []
    for i in range(len(c.gates) - 1, -1, -1):
        ch = c.slot(i)
        if ch is not None:
            paths = _damp(paths, ch)
        g = c.gates[i]
        if isinstance(g, PauliRotation):
            paths = propagate_rotation(paths, g.axis, g.angle, policy)
            counts.append(len(paths))
            if max_live is not None and len(paths) > max_live:
                raise PathBudgetExceeded(f"{len(paths)} live paths exceed the cap of {max_live}")
        elif isinstance(g, (NamedClifford, PauliInsertion)):
            paths = propagate_clifford(paths, g)
        else:
            raise ValueError(f"unsupported gate {g!r}")
    return SpdResult(paths.readout(initial), counts, paths)


def spd_expectation(c: Circuit, o: PauliObservable, initial: int = 0, policy: TruncationPolicy = TruncationPolicy()) -> float:
    return spd_run(c, o, initial, policy).value
