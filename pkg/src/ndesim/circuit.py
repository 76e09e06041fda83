"""Layered circuit IR, benchmark circuit builders and text serialization.

A :class:`ParamCircuit` is a list of layers, each a Clifford prefix, one Pauli
rotation ``exp(-i theta P / 2)`` and an optional Clifford suffix, plus the
current angle vector.  Binding angles yields an immutable :class:`Circuit`
(flat gate list, optional per-gate noise slot, layer boundaries).  Every
binding of the same skeleton has the same gate layout; only angles differ.

Qubits are 0-indexed; qubit 0 is the leftmost letter of a Pauli label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence, Union

import numpy as np

from .pauli import PauliString

if TYPE_CHECKING:
    from .noise import PauliNoiseChannel

CLIFFORD_ARITY = {"H": 1, "S": 1, "X": 1, "Y": 1, "Z": 1, "CZ": 2, "CNOT": 2, "CZ_X": 2}
SNAP_TOL = 1e-12
HALF_PI = math.pi / 2


def clifford_index(angle: float, tol: float = SNAP_TOL) -> int | None:
    """``k`` with ``angle == k*pi/2 (mod 2pi)`` within ``tol``, else None."""
    k = round(angle / HALF_PI)
    if abs(angle - k * HALF_PI) <= tol:
        return k % 4
    return None


@dataclass(frozen=True)
class NamedClifford:
    kind: str
    qubits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.kind not in CLIFFORD_ARITY:
            raise ValueError(f"unknown Clifford gate {self.kind!r}")
        if len(self.qubits) != CLIFFORD_ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {CLIFFORD_ARITY[self.kind]} qubit(s)")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("gate qubits must be distinct")

    @property
    def n_targets(self) -> int:
        return len(self.qubits)


@dataclass(frozen=True)
class PauliRotation:
    """``exp(-i angle axis / 2)``; ``axis`` must be a +1-signed Hermitian Pauli."""

    axis: PauliString
    angle: float
    layer: int | None = None

    def __post_init__(self):
        if self.axis != self.axis.hermitian():
            raise ValueError("rotation axis must be an unsigned Hermitian Pauli")
        if self.axis.is_identity():
            raise ValueError("rotation axis must be non-identity")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.axis.support

    @property
    def n_targets(self) -> int:
        return self.axis.weight

    @property
    def clifford_k(self) -> int | None:
        return clifford_index(self.angle)


@dataclass(frozen=True)
class PauliInsertion:
    pauli: PauliString
    layer: int | None = None

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.pauli.support

    @property
    def n_targets(self) -> int:
        return 1


Gate = Union[NamedClifford, PauliRotation, PauliInsertion]


def _check_gate(gate: Gate, n: int) -> None:
    if isinstance(gate, NamedClifford):
        if any(not 0 <= q < n for q in gate.qubits):
            raise ValueError(f"{gate} exceeds circuit width {n}")
    elif isinstance(gate, PauliRotation):
        if gate.axis.n_qubits != n:
            raise ValueError("rotation axis width mismatch")
    elif isinstance(gate, PauliInsertion):
        if gate.pauli.n_qubits != n:
            raise ValueError("insertion width mismatch")
    else:
        raise TypeError(f"not a gate: {gate!r}")


@dataclass(frozen=True)
class CliffordConfiguration:
    k: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        if any(v not in (0, 1, 2, 3) for v in self.k):
            raise ValueError("configuration entries must lie in {0,1,2,3}")

    def __len__(self) -> int:
        return len(self.k)


@dataclass(frozen=True)
class InsertionPattern:
    paulis: tuple[PauliString, ...]

    def __post_init__(self):
        object.__setattr__(self, "paulis", tuple(self.paulis))
        if self.paulis and len({p.n_qubits for p in self.paulis}) != 1:
            raise ValueError("pattern Paulis must share one width")

    def __len__(self) -> int:
        return len(self.paulis)

    @classmethod
    def identity(cls, n_qubits: int, n_layers: int) -> "InsertionPattern":
        return cls(tuple(PauliString(n_qubits) for _ in range(n_layers)))

    def is_identity(self) -> bool:
        return all(p.is_identity() for p in self.paulis)


@dataclass(frozen=True)
class Circuit:
    """Concrete gate list.

    ``noise`` holds one optional channel per gate position, applied right
    after that gate.  ``layer_ends[l]`` is the index of the last gate of
    logical layer ``l`` (where that layer's Pauli insertion belongs).
    """

    n_qubits: int
    gates: tuple[Gate, ...]
    noise: tuple["PauliNoiseChannel | None", ...] | None = None
    layer_ends: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            _check_gate(g, self.n_qubits)
        if self.noise is not None:
            object.__setattr__(self, "noise", tuple(self.noise))
            if len(self.noise) != len(self.gates):
                raise ValueError("noise slots must match gate count")

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def n_layers(self) -> int:
        return len(self.layer_ends)

    def slot(self, i: int):
        return None if self.noise is None else self.noise[i]

    def with_noise(self, slots: Sequence["PauliNoiseChannel | None"] | None) -> "Circuit":
        return replace(self, noise=None if slots is None else tuple(slots))

    def is_clifford(self) -> bool:
        return all(not isinstance(g, PauliRotation) or g.clifford_k is not None for g in self.gates)

    def is_noisy(self) -> bool:
        return self.noise is not None and any(ch is not None and not ch.is_identity() for ch in self.noise)

    def layout(self) -> tuple:
        """Angle-free structural signature (gate kinds, axes, qubits, noise)."""
        sig = []
        for i, g in enumerate(self.gates):
            if isinstance(g, NamedClifford):
                item = (g.kind, g.qubits)
            elif isinstance(g, PauliRotation):
                item = ("ROT", g.axis.key)
            else:
                item = ("INS",)
            sig.append(item + (self.slot(i),))
        return tuple(sig)


@dataclass(frozen=True)
class Layer:
    axis: PauliString
    prefix: tuple[NamedClifford, ...] = ()
    suffix: tuple[NamedClifford, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(self.prefix))
        object.__setattr__(self, "suffix", tuple(self.suffix))


@dataclass(frozen=True)
class ParamCircuit:
    """Layered parameterized circuit with its current angle vector.

    ``insertions``, when set, holds one Pauli per layer that is placed after
    the layer's last gate on binding.
    """

    n_qubits: int
    layers: tuple[Layer, ...]
    angles: tuple[float, ...]
    insertions: tuple[PauliString, ...] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if len(self.angles) != len(self.layers):
            raise ValueError("one angle per layer required")
        for layer in self.layers:
            if layer.axis.n_qubits != self.n_qubits:
                raise ValueError("layer axis width mismatch")
            for g in layer.prefix + layer.suffix:
                _check_gate(g, self.n_qubits)
        if self.insertions is not None:
            object.__setattr__(self, "insertions", tuple(self.insertions))
            if len(self.insertions) != len(self.layers):
                raise ValueError("one insertion per layer required")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def axes(self) -> tuple[PauliString, ...]:
        return tuple(layer.axis for layer in self.layers)

    def with_angles(self, angles: Iterable[float]) -> "ParamCircuit":
        return replace(self, angles=tuple(angles))

    def bind(self, angles: Iterable[float] | None = None) -> Circuit:
        angles = self.angles if angles is None else tuple(angles)
        if len(angles) != self.n_layers:
            raise ValueError("one angle per layer required")
        gates: list[Gate] = []
        ends = []
        for l, (layer, theta) in enumerate(zip(self.layers, angles)):
            gates.extend(layer.prefix)
            gates.append(PauliRotation(layer.axis, float(theta), layer=l))
            gates.extend(layer.suffix)
            if self.insertions is not None:
                gates.append(PauliInsertion(self.insertions[l], layer=l))
            ends.append(len(gates) - 1)
        return Circuit(self.n_qubits, tuple(gates), None, tuple(ends))


# ---------------------------------------------------------------------------
# configuration substitution and insertion patterns
# ---------------------------------------------------------------------------


def configuration_angles(k: Sequence[int] | CliffordConfiguration) -> tuple[float, ...]:
    ks = k.k if isinstance(k, CliffordConfiguration) else tuple(k)
    return tuple(int(v) * HALF_PI for v in ks)


def substitute_configuration(c: ParamCircuit, k: Sequence[int] | CliffordConfiguration) -> Circuit:
    """Bind every layer angle to ``k_l * pi/2``; the result is all-Clifford."""
    ks = k if isinstance(k, CliffordConfiguration) else CliffordConfiguration(tuple(k))
    if len(ks) != c.n_layers:
        raise ValueError(f"configuration length {len(ks)} != {c.n_layers} layers")
    return c.bind(configuration_angles(ks))


def apply_insertion_pattern(c, pattern: InsertionPattern | Sequence[PauliString]):
    """Place one Pauli after each logical layer (after that layer's noise).

    Works on :class:`ParamCircuit` (stored, applied on binding) and on bound
    :class:`Circuit` objects.  Identity entries are kept as explicit
    insertion gates so that every pattern shares one layout.
    """
    paulis = pattern.paulis if isinstance(pattern, InsertionPattern) else tuple(pattern)
    if len(paulis) != c.n_layers:
        raise ValueError(f"pattern length {len(paulis)} != {c.n_layers} layers")
    if any(p.n_qubits != c.n_qubits for p in paulis):
        raise ValueError("pattern width mismatch")
    if isinstance(c, ParamCircuit):
        if c.insertions is not None:
            paulis = tuple(a * b for a, b in zip(paulis, c.insertions))
        return replace(c, insertions=paulis)
    gates: list[Gate] = []
    noise = [] if c.noise is not None else None
    ends = []
    end_set = {e: l for l, e in enumerate(c.layer_ends)}
    for i, g in enumerate(c.gates):
        gates.append(g)
        if noise is not None:
            noise.append(c.noise[i])
        if i in end_set:
            l = end_set[i]
            gates.append(PauliInsertion(paulis[l], layer=l))
            if noise is not None:
                noise.append(None)
            ends.append(len(gates) - 1)
    return Circuit(c.n_qubits, tuple(gates), None if noise is None else tuple(noise), tuple(ends))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _per_site(value, count: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (count,)).copy()
    if arr.shape != (count,):
        raise ValueError(f"{name} must be scalar or length {count}")
    return arr


def ring_edges(n: int) -> list[tuple[int, int]]:
    return [(i, (i + 1) % n) for i in range(n)]


def build_trotter_ising(
    n: int,
    N: int,
    J=1.0,
    h=-1.0,
    T: float = 1.0,
    merge_half_steps: bool = False,
) -> ParamCircuit:
    """Second-order Trotter circuit for the transverse-field Ising ring.

    Each step is X half-steps (angle ``h_i T / N``), ZZ rotations on the
    periodic ring (angle ``-2 J_ij T / N``), then X half-steps again: ``3nN``
    layers.  ``merge_half_steps`` fuses the back-to-back X half-steps of
    consecutive steps into single rotations, leaving ``(2N+1)n`` layers.
    """
    if n < 3:
        raise ValueError("Ising ring needs n >= 3")
    if N < 1:
        raise ValueError("need at least one Trotter step")
    edges = ring_edges(n)
    Jv = _per_site(J, len(edges), "J")
    hv = _per_site(h, n, "h")
    x_axes = [PauliString(n, 1 << q, 0) for q in range(n)]
    zz_axes = [PauliString(n, 0, (1 << a) | (1 << b)) for a, b in edges]
    half = hv * T / N
    zz = -2.0 * Jv * T / N

    axes: list[PauliString] = []
    angles: list[float] = []

    def x_layer(scale: float):
        axes.extend(x_axes)
        angles.extend(float(scale * a) for a in half)

    for step in range(N):
        if not merge_half_steps or step == 0:
            x_layer(1.0)
        axes.extend(zz_axes)
        angles.extend(float(a) for a in zz)
        x_layer(2.0 if merge_half_steps and step < N - 1 else 1.0)
    return ParamCircuit(n, tuple(Layer(ax) for ax in axes), tuple(angles))


def compile_native(c: ParamCircuit) -> ParamCircuit:
    """Rewrite single-qubit X and two-qubit ZZ rotations over {H, CZ, R_Z}.

    ``R_X = H R_Z H``; ``R_ZZ(a, b) = (H_b CZ H_b) R_Z(b) (H_b CZ H_b)``.  The
    basis-change gates go into the layer's prefix and suffix, so layer count,
    angles and insertion slots are unchanged.
    """
    layers = []
    for layer in c.layers:
        ax = layer.axis
        sup = ax.support
        if ax.weight == 1 and ax.letter(sup[0]) == "Z":
            layers.append(layer)
            continue
        if ax.weight == 1 and ax.letter(sup[0]) == "X":
            q = sup[0]
            pre = (NamedClifford("H", (q,)),)
            post = pre
        elif ax.weight == 2 and all(ax.letter(q) == "Z" for q in sup):
            a, b = sup
            q = b
            pre = (NamedClifford("H", (b,)), NamedClifford("CZ", (a, b)), NamedClifford("H", (b,)))
            post = pre
        else:
            raise ValueError(f"compile_native: unsupported rotation axis {ax.to_label()}")
        axis = PauliString(c.n_qubits, 0, 1 << q)
        layers.append(Layer(axis, layer.prefix + pre, post + layer.suffix))
    return replace(c, layers=tuple(layers))


def build_structured_family(D: int, theta: float, phi: float) -> ParamCircuit:
    """Star-shaped ``2D+1``-qubit circuit of ``2D`` conjugated Y rotations.

    Block ``d`` couples the centre qubit 0 to the pair ``(2d-1, 2d)`` through
    ``CZ_X(0, 2d) CZ(0, 2d-1) R_Y(0) CZ(0, 2d-1) CZ_X(0, 2d)``.  The first D
    blocks use angle ``theta + phi``; the last D blocks revisit the pairs in
    reverse order with ``theta - phi``.  At ``theta = 0`` the whole circuit is
    the identity.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    n = 2 * D + 1
    axis = PauliString.from_sparse(n, {0: "Y"})
    layers, angles = [], []
    for d in range(1, 2 * D + 1):
        m = d if d <= D else 2 * D + 1 - d
        a, b = 2 * m - 1, 2 * m
        pre = (NamedClifford("CZ_X", (0, b)), NamedClifford("CZ", (0, a)))
        layers.append(Layer(axis, pre, tuple(reversed(pre))))
        angles.append(theta + phi if d <= D else theta - phi)
    return ParamCircuit(n, tuple(layers), tuple(angles))


def single_qubit_circuit(axes: Sequence[str], angles: Sequence[float], prefix: Sequence[str] = ()) -> ParamCircuit:
    """One-qubit chain of rotations, e.g. ``(["X", "Z"], [theta, phi])``.

    ``prefix`` lists named gates applied before the first rotation.
    """
    pre = tuple(NamedClifford(k, (0,)) for k in prefix)
    layers = [Layer(PauliString.from_label(a), pre if i == 0 else ()) for i, a in enumerate(axes)]
    return ParamCircuit(1, tuple(layers), tuple(angles))


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------

HEADER = "ndesim-circuit v1"


def _sparse_label(p: PauliString) -> tuple[str, list[int]]:
    sup = list(p.support)
    return "+" + "".join(p.letter(q) for q in sup), sup


def _channel_lines(ch) -> list[str]:
    out = []
    for p, w in ch.factors:
        lab, sup = _sparse_label(p)
        out.append(f"NOISE {lab} {' '.join(map(str, sup))} {w!r}")
    return out


def dumps(c: Circuit) -> str:
    """Line-oriented text form: header, width, one gate per line."""
    lines = [HEADER, f"qubits {c.n_qubits}"]
    ends = set(c.layer_ends)
    for i, g in enumerate(c.gates):
        if isinstance(g, NamedClifford):
            lines.append(f"{g.kind} {' '.join(map(str, g.qubits))}")
        elif isinstance(g, PauliRotation):
            lab, sup = _sparse_label(g.axis)
            lines.append(f"ROT {lab} {' '.join(map(str, sup))} {g.angle!r}")
        else:
            lines.append(f"INS {g.pauli.to_label()}")
        ch = c.slot(i)
        if ch is not None:
            lines.extend(_channel_lines(ch))
        if i in ends:
            lines.append("ENDLAYER")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Circuit:
    from .noise import PauliNoiseChannel

    rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows or rows[0] != HEADER:
        raise ValueError("missing circuit header")
    head = rows[1].split()
    if head[0] != "qubits":
        raise ValueError("expected 'qubits <n>' line")
    n = int(head[1])
    gates: list[Gate] = []
    factors: list[list] = []
    ends: list[int] = []
    layer = 0
    for r in rows[2:]:
        tok = r.split()
        op = tok[0]
        if op == "ENDLAYER":
            ends.append(len(gates) - 1)
            layer += 1
        elif op == "NOISE":
            sup = [int(t) for t in tok[2:-1]]
            p = PauliString.from_sparse(n, dict(zip(sup, tok[1].lstrip("+"))))
            factors[-1].append((p, float(tok[-1])))
        elif op == "ROT":
            sup = [int(t) for t in tok[2:-1]]
            axis = PauliString.from_sparse(n, dict(zip(sup, tok[1].lstrip("+"))))
            gates.append(PauliRotation(axis, float(tok[-1]), layer=layer))
            factors.append([])
        elif op == "INS":
            gates.append(PauliInsertion(PauliString.from_label(tok[1]), layer=layer))
            factors.append([])
        else:
            gates.append(NamedClifford(op, tuple(int(t) for t in tok[1:])))
            factors.append([])
    noise = None
    if any(factors):
        noise = tuple(PauliNoiseChannel(tuple(f)) if f else None for f in factors)
    return Circuit(n, tuple(gates), noise, tuple(ends))
