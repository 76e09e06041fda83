"""Pauli noise channels, the two-qubit hardware profile and channel inverses.

A channel is a sequence of single-Pauli factors, each
``rho -> w rho + (1 - w) P rho P^dag``.  Pauli channels commute, so the
factor order never changes the map; it is kept for reproducible output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .circuit import Circuit, NamedClifford, PauliRotation
from .pauli import PauliArray, PauliString, commutes, int_to_words


@dataclass(frozen=True)
class PauliNoiseChannel:
    factors: tuple[tuple[PauliString, float], ...] = ()

    def __post_init__(self):
        facs = tuple((p.hermitian(), float(w)) for p, w in self.factors)
        object.__setattr__(self, "factors", facs)
        for _, w in facs:
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"factor weight {w} outside [0, 1]")
        if len({p.n_qubits for p, _ in facs}) > 1:
            raise ValueError("factor widths differ")

    @property
    def n_qubits(self) -> int | None:
        return self.factors[0][0].n_qubits if self.factors else None

    def is_identity(self) -> bool:
        return all(w == 1.0 or p.is_identity() for p, w in self.factors)

    def compose(self, other: "PauliNoiseChannel | None") -> "PauliNoiseChannel":
        if other is None:
            return self
        return PauliNoiseChannel(self.factors + other.factors)

    def damping(self, q: PauliString) -> float:
        return damping_factor(self, q)

    def damping_rows(self, arr: PauliArray) -> np.ndarray:
        """Damping factor for every row of a Pauli batch."""
        out = np.ones(len(arr))
        w_words = arr.x.shape[1]
        for p, w in self.factors:
            if w == 1.0:
                continue
            px, pz = int_to_words(p.x_bits, w_words), int_to_words(p.z_bits, w_words)
            anti = arr.anticommutes_rows(px, pz)
            out[anti] *= 2.0 * w - 1.0
        return out


@dataclass(frozen=True)
class HardwareNoiseProfile:
    """Correlated ZZ dephasing plus independent X/Y/Z flips after each
    two-qubit gate."""

    gamma_zz: float = 0.0
    gamma_x: float = 0.0
    gamma_y: float = 0.0
    gamma_z: float = 0.0

    def __post_init__(self):
        for name in ("gamma_zz", "gamma_x", "gamma_y", "gamma_z"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise ValueError(f"{name}={v} outside [0, 0.5]")

    @classmethod
    def from_mapping(cls, m: Mapping[str, float]) -> "HardwareNoiseProfile":
        return cls(**{k: float(m[k]) for k in ("gamma_zz", "gamma_x", "gamma_y", "gamma_z") if k in m})

    def is_zero(self) -> bool:
        return self.gamma_zz == self.gamma_x == self.gamma_y == self.gamma_z == 0.0

    def channel(self, n_qubits: int, a: int, b: int) -> PauliNoiseChannel:
        facs = [(PauliString.from_sparse(n_qubits, {a: "Z", b: "Z"}), 1.0 - self.gamma_zz)]
        for q in (a, b):
            for letter, g in (("X", self.gamma_x), ("Y", self.gamma_y), ("Z", self.gamma_z)):
                facs.append((PauliString.from_sparse(n_qubits, {q: letter}), 1.0 - g))
        return PauliNoiseChannel(tuple(facs))


@dataclass(frozen=True)
class SignedPauliMixture:
    """``sum_r c_r P_r . P_r^dag`` with real, possibly negative, ``c_r``."""

    terms: tuple[tuple[PauliString, float], ...]

    def __post_init__(self):
        if abs(sum(c for _, c in self.terms) - 1.0) > 1e-9:
            raise ValueError("mixture coefficients must sum to 1")

    def damping(self, q: PauliString) -> float:
        return sum(c * (1.0 if commutes(p, q) else -1.0) for p, c in self.terms)

    def as_dict(self) -> dict[str, float]:
        return {p.to_label(): c for p, c in self.terms}


def axis_noise(axis: PauliString, gamma: float) -> PauliNoiseChannel:
    """Dephasing along a rotation axis: ``(1-gamma) rho + gamma P rho P``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma={gamma} outside [0, 1]")
    return PauliNoiseChannel(((axis, 1.0 - gamma),))


def damping_factor(ch: PauliNoiseChannel | None, q: PauliString) -> float:
    """Scalar ``f`` with ``ch^dag(q) = f q``."""
    if ch is None:
        return 1.0
    if ch.n_qubits is not None and ch.n_qubits != q.n_qubits:
        raise ValueError("dimension mismatch")
    f = 1.0
    for p, w in ch.factors:
        if not commutes(p, q):
            f *= 2.0 * w - 1.0
    return f


def invert_channel(ch: PauliNoiseChannel, n_qubits: int | None = None) -> SignedPauliMixture:
    """Exact inverse as a flat signed Pauli mixture (``2**F`` terms before merging)."""
    n = ch.n_qubits or n_qubits
    if n is None:
        raise ValueError("n_qubits required for an empty channel")
    acc: dict[tuple[int, int], float] = {(0, 0): 1.0}
    for p, w in ch.factors:
        if abs(2.0 * w - 1.0) < 1e-15:
            raise ValueError("factor with w = 1/2 is not invertible")
        keep = w / (2.0 * w - 1.0)
        flip = -(1.0 - w) / (2.0 * w - 1.0)
        nxt: dict[tuple[int, int], float] = {}
        for (x, z), c in acc.items():
            nxt[(x, z)] = nxt.get((x, z), 0.0) + c * keep
            if flip != 0.0:
                k2 = (x ^ p.x_bits, z ^ p.z_bits)
                nxt[k2] = nxt.get(k2, 0.0) + c * flip
        acc = nxt
    terms = tuple(
        (PauliString(n, x, z).hermitian(), c) for (x, z), c in sorted(acc.items()) if c != 0.0
    )
    return SignedPauliMixture(terms)


def _is_two_qubit(g) -> bool:
    if isinstance(g, NamedClifford):
        return g.n_targets == 2
    if isinstance(g, PauliRotation):
        return g.axis.weight == 2
    return False


def attach_profile(c: Circuit, profile: HardwareNoiseProfile) -> Circuit:
    """Add the profile channel after every two-qubit gate (CZ, CZ_X, CNOT,
    weight-2 rotation).  Existing slots are composed with the new factors."""
    slots = list(c.noise) if c.noise is not None else [None] * len(c.gates)
    for i, g in enumerate(c.gates):
        if _is_two_qubit(g):
            a, b = g.qubits
            ch = profile.channel(c.n_qubits, a, b)
            slots[i] = ch if slots[i] is None else slots[i].compose(ch)
    return c.with_noise(slots)


def attach_axis_noise(c: Circuit, gammas: float | Sequence[float]) -> Circuit:
    """Axis-aligned dephasing after every rotation; ``gammas`` per layer or scalar."""
    rots = [i for i, g in enumerate(c.gates) if isinstance(g, PauliRotation)]
    gs = np.broadcast_to(np.asarray(gammas, dtype=float), (len(rots),))
    slots = list(c.noise) if c.noise is not None else [None] * len(c.gates)
    for i, g in zip(rots, gs):
        ch = axis_noise(c.gates[i].axis, float(g))
        slots[i] = ch if slots[i] is None else slots[i].compose(ch)
    return c.with_noise(slots)


def channel_factors(c: Circuit) -> Iterable[tuple[int, PauliString, float]]:
    """Flat ``(gate index, pauli, w)`` listing of all non-trivial factors."""
    if c.noise is None:
        return
    for i, ch in enumerate(c.noise):
        if ch is None:
            continue
        for p, w in ch.factors:
            if w != 1.0 and not p.is_identity():
                yield i, p, w
