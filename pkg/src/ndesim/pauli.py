"""Phase-tracked n-qubit Pauli algebra.

Convention shared by every engine in the package::

    P = i**phase_exp * prod_j X_j**x_j Z_j**z_j

with qubit ``j`` stored in bit ``j`` of the ``x_bits``/``z_bits`` masks and
qubit 0 printed leftmost.  ``Y`` is therefore ``x=1, z=1, phase_exp=1``.

Two representations live here: the immutable scalar :class:`PauliString`
(masks are Python ints) and :class:`PauliArray`, a mutable batch of Paulis
packed into ``uint64`` words that the stabilizer and SPD engines operate on
with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

import numpy as np

_LETTERS = "IXZY"  # indexed by x + 2z
_PREFIX = {0: "+", 1: "+i", 2: "-", 3: "-i"}
_PREFIX_PARSE = {"": 0, "+": 0, "i": 1, "+i": 1, "-": 2, "-i": 3}

_I2 = np.eye(2, dtype=complex)
_X2 = np.array([[0, 1], [1, 0]], dtype=complex)
_Z2 = np.array([[1, 0], [0, -1]], dtype=complex)


def popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class PauliString:
    """Immutable n-qubit Pauli operator ``i**phase_exp * X**x Z**z``."""

    n_qubits: int
    x_bits: int = 0
    z_bits: int = 0
    phase_exp: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        limit = 1 << self.n_qubits
        if not (0 <= self.x_bits < limit and 0 <= self.z_bits < limit):
            raise ValueError("bit masks exceed n_qubits")
        object.__setattr__(self, "phase_exp", self.phase_exp % 4)

    # -- construction -----------------------------------------------------
    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Parse ``"+XIZY"``, ``"-iZZ"``, ``"XX"``.  Letters carry their own
        phase, so ``"Y"`` is exactly the Y operator."""
        body = label.lstrip("+-i")
        prefix = label[: len(label) - len(body)]
        if prefix not in _PREFIX_PARSE or not body:
            raise ValueError(f"bad Pauli label {label!r}")
        x = z = 0
        n_y = 0
        for q, ch in enumerate(body.upper()):
            if ch == "X":
                x |= 1 << q
            elif ch == "Z":
                z |= 1 << q
            elif ch == "Y":
                x |= 1 << q
                z |= 1 << q
                n_y += 1
            elif ch != "I":
                raise ValueError(f"bad Pauli letter {ch!r} in {label!r}")
        return cls(len(body), x, z, _PREFIX_PARSE[prefix] + n_y)

    @classmethod
    def from_sparse(cls, n_qubits: int, letters: Mapping[int, str]) -> "PauliString":
        """Build from ``{qubit: letter}``, e.g. ``{0: "Z", 3: "Z"}``."""
        chars = ["I"] * n_qubits
        for q, ch in letters.items():
            if not 0 <= q < n_qubits:
                raise ValueError(f"qubit {q} out of range")
            chars[q] = ch
        return cls.from_label("".join(chars))

    # -- queries ------------------------------------------------------------
    @property
    def key(self) -> tuple[int, int]:
        return (self.x_bits, self.z_bits)

    @property
    def n_y(self) -> int:
        return popcount(self.x_bits & self.z_bits)

    @property
    def weight(self) -> int:
        return popcount(self.x_bits | self.z_bits)

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x_bits | self.z_bits
        return tuple(q for q in range(self.n_qubits) if m >> q & 1)

    def letter(self, q: int) -> str:
        return _LETTERS[(self.x_bits >> q & 1) + 2 * (self.z_bits >> q & 1)]

    def is_identity(self) -> bool:
        return self.x_bits == 0 and self.z_bits == 0

    def is_hermitian(self) -> bool:
        return (self.phase_exp - self.n_y) % 2 == 0

    def phase_free(self) -> "PauliString":
        return PauliString(self.n_qubits, self.x_bits, self.z_bits, 0)

    def hermitian(self) -> "PauliString":
        """Same (x, z) with the phase that makes it a +1-signed Hermitian
        Pauli (the letters' own product)."""
        return PauliString(self.n_qubits, self.x_bits, self.z_bits, self.n_y)

    def to_label(self) -> str:
        letters = "".join(self.letter(q) for q in range(self.n_qubits))
        return _PREFIX[(self.phase_exp - self.n_y) % 4] + letters

    def __str__(self) -> str:
        return self.to_label()

    def __repr__(self) -> str:
        return f"PauliString({self.to_label()!r})"

    # -- algebra ------------------------------------------------------------
    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)

    def commutes(self, other: "PauliString") -> bool:
        return commutes(self, other)

    def to_matrix(self) -> np.ndarray:
        """Dense ``2**n x 2**n`` matrix, qubit 0 as the leftmost Kronecker factor."""
        out = np.array([[1j**self.phase_exp]], dtype=complex)
        for q in range(self.n_qubits):
            site = (_X2 if self.x_bits >> q & 1 else _I2) @ (_Z2 if self.z_bits >> q & 1 else _I2)
            out = np.kron(out, site)
        return out


def _check_dims(p: PauliString, q: PauliString) -> None:
    if p.n_qubits != q.n_qubits:
        raise ValueError(f"dimension mismatch: {p.n_qubits} vs {q.n_qubits} qubits")


def multiply(p: PauliString, q: PauliString) -> PauliString:
    """Operator product ``p @ q`` with exact phase."""
    _check_dims(p, q)
    # X^a Z^b X^c Z^d = (-1)^{b.c} X^{a+c} Z^{b+d}
    phase = p.phase_exp + q.phase_exp + 2 * popcount(p.z_bits & q.x_bits)
    return PauliString(p.n_qubits, p.x_bits ^ q.x_bits, p.z_bits ^ q.z_bits, phase)


def commutes(p: PauliString, q: PauliString) -> bool:
    _check_dims(p, q)
    return popcount((p.x_bits & q.z_bits) ^ (p.z_bits & q.x_bits)) % 2 == 0


class PauliObservable:
    """Weighted sum of Paulis ``sum_Q a_Q Q``.

    Keys are phase-free ``(x_bits, z_bits)`` pairs standing for the operator
    ``X**x Z**z``; any phase of an input Pauli is folded into its coefficient.
    Treated as immutable: every operation returns a new observable.
    """

    __slots__ = ("n_qubits", "_terms")

    def __init__(self, n_qubits: int, terms: Mapping[tuple[int, int], complex] | None = None):
        if n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        self.n_qubits = n_qubits
        self._terms = {k: complex(v) for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def from_paulis(cls, items: Iterable[tuple[PauliString, complex]], n_qubits: int | None = None) -> "PauliObservable":
        items = list(items)
        if n_qubits is None:
            if not items:
                raise ValueError("n_qubits required for an empty observable")
            n_qubits = items[0][0].n_qubits
        acc: dict[tuple[int, int], complex] = {}
        for p, c in items:
            if p.n_qubits != n_qubits:
                raise ValueError("dimension mismatch in observable terms")
            acc[p.key] = acc.get(p.key, 0) + complex(c) * 1j**p.phase_exp
        return cls(n_qubits, acc)

    @classmethod
    def from_labels(cls, terms: Mapping[str, complex]) -> "PauliObservable":
        return cls.from_paulis((PauliString.from_label(k), v) for k, v in terms.items())

    @classmethod
    def single(cls, p: PauliString, coeff: complex = 1.0) -> "PauliObservable":
        return cls.from_paulis([(p, coeff)])

    @classmethod
    def magnetization(cls, n_qubits: int) -> "PauliObservable":
        """``M_Z = sum_i Z_i``."""
        return cls(n_qubits, {(0, 1 << q): 1.0 for q in range(n_qubits)})

    @property
    def terms(self) -> Mapping[tuple[int, int], complex]:
        return MappingProxyType(self._terms)

    def __iter__(self) -> Iterator[tuple[PauliString, complex]]:
        for (x, z), c in self._terms.items():
            yield PauliString(self.n_qubits, x, z), c

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliObservable):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self._terms == other._terms

    def __repr__(self) -> str:
        body = " + ".join(f"({c:g}){p.to_label()[1:]}" for p, c in self)
        return f"PauliObservable({body or '0'})"

    def __add__(self, other: "PauliObservable") -> "PauliObservable":
        return observable_add(self, other)

    def __sub__(self, other: "PauliObservable") -> "PauliObservable":
        return observable_add(self, observable_scale(other, -1))

    def __mul__(self, c: complex) -> "PauliObservable":
        return observable_scale(self, c)

    __rmul__ = __mul__

    def __neg__(self) -> "PauliObservable":
        return observable_scale(self, -1)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        # X^x Z^z is Hermitian up to (-1)^{#Y}; coefficient must compensate
        for (x, z), c in self._terms.items():
            h = c * 1j ** popcount(x & z)
            if abs(h.imag) > tol:
                return False
        return True

    def to_matrix(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for p, c in self:
            out += c * p.to_matrix()
        return out


def observable_add(a: PauliObservable, b: PauliObservable) -> PauliObservable:
    if a.n_qubits != b.n_qubits:
        raise ValueError("dimension mismatch")
    acc = dict(a.terms)
    for k, v in b.terms.items():
        acc[k] = acc.get(k, 0) + v
    return PauliObservable(a.n_qubits, acc)


def observable_scale(a: PauliObservable, c: complex) -> PauliObservable:
    return PauliObservable(a.n_qubits, {k: v * c for k, v in a.terms.items()})


# ---------------------------------------------------------------------------
# Batched representation
# ---------------------------------------------------------------------------


def n_words(n_qubits: int) -> int:
    return (n_qubits + 63) // 64


def int_to_words(v: int, w: int) -> np.ndarray:
    return np.array([(v >> (64 * i)) & 0xFFFFFFFFFFFFFFFF for i in range(w)], dtype=np.uint64)


def words_to_int(row: np.ndarray) -> int:
    return sum(int(v) << (64 * i) for i, v in enumerate(row))


def _bit(q: int) -> tuple[int, np.uint64]:
    return q >> 6, np.uint64(1) << np.uint64(q & 63)


class PauliArray:
    """Mutable batch of Paulis, one per row, bit-packed into uint64 words.

    ``x`` and ``z`` have shape ``(rows, words)``; ``phase`` holds exponents of
    ``i`` mod 4.  Methods act in place and are meant for per-worker scratch
    use; nothing here is shared between threads.
    """

    __slots__ = ("n_qubits", "x", "z", "phase")

    def __init__(self, n_qubits: int, x: np.ndarray, z: np.ndarray, phase: np.ndarray):
        self.n_qubits = n_qubits
        self.x = x
        self.z = z
        self.phase = phase

    @classmethod
    def empty(cls, n_qubits: int, rows: int) -> "PauliArray":
        w = n_words(n_qubits)
        return cls(
            n_qubits,
            np.zeros((rows, w), dtype=np.uint64),
            np.zeros((rows, w), dtype=np.uint64),
            np.zeros(rows, dtype=np.uint8),
        )

    @classmethod
    def from_strings(cls, paulis: Iterable[PauliString], n_qubits: int | None = None) -> "PauliArray":
        paulis = list(paulis)
        if n_qubits is None:
            n_qubits = paulis[0].n_qubits
        out = cls.empty(n_qubits, len(paulis))
        w = out.x.shape[1]
        for i, p in enumerate(paulis):
            out.x[i] = int_to_words(p.x_bits, w)
            out.z[i] = int_to_words(p.z_bits, w)
            out.phase[i] = p.phase_exp
        return out

    def __len__(self) -> int:
        return self.x.shape[0]

    def copy(self) -> "PauliArray":
        return PauliArray(self.n_qubits, self.x.copy(), self.z.copy(), self.phase.copy())

    def take(self, idx) -> "PauliArray":
        return PauliArray(self.n_qubits, self.x[idx], self.z[idx], self.phase[idx])

    def tile(self, reps: int) -> "PauliArray":
        return PauliArray(
            self.n_qubits,
            np.tile(self.x, (reps, 1)),
            np.tile(self.z, (reps, 1)),
            np.tile(self.phase, reps),
        )

    @staticmethod
    def concat(parts: list["PauliArray"]) -> "PauliArray":
        return PauliArray(
            parts[0].n_qubits,
            np.concatenate([p.x for p in parts]),
            np.concatenate([p.z for p in parts]),
            np.concatenate([p.phase for p in parts]),
        )

    def row(self, i: int) -> PauliString:
        return PauliString(self.n_qubits, words_to_int(self.x[i]), words_to_int(self.z[i]), int(self.phase[i]))

    def to_strings(self) -> list[PauliString]:
        return [self.row(i) for i in range(len(self))]

    def keys(self) -> np.ndarray:
        """One hashable/sortable void-typed key per row over (x, z) only."""
        xz = np.ascontiguousarray(np.concatenate([self.x, self.z], axis=1))
        return xz.view(np.dtype((np.void, xz.dtype.itemsize * xz.shape[1]))).ravel()

    # -- per-qubit bit access ---------------------------------------------
    def bits(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        w, m = _bit(q)
        return (self.x[:, w] & m) != 0, (self.z[:, w] & m) != 0

    def _flip(self, arr: np.ndarray, q: int, mask: np.ndarray) -> None:
        w, m = _bit(q)
        arr[:, w] ^= np.where(mask, m, np.uint64(0))

    # -- algebra against a fixed Pauli -----------------------------------
    def anticommutes_with(self, p: PauliString) -> np.ndarray:
        w = self.x.shape[1]
        px, pz = int_to_words(p.x_bits, w), int_to_words(p.z_bits, w)
        cnt = np.bitwise_count((self.x & pz) ^ (self.z & px)).sum(axis=1, dtype=np.int64)
        return (cnt & 1).astype(bool)

    def anticommutes_rows(self, px: np.ndarray, pz: np.ndarray) -> np.ndarray:
        """Row-wise anticommutation against another stack of (x, z) words."""
        cnt = np.bitwise_count((self.x & pz) ^ (self.z & px)).sum(axis=1, dtype=np.int64)
        return (cnt & 1).astype(bool)

    def left_multiply(self, p: PauliString, rows: np.ndarray | None = None) -> None:
        """Row <- p @ row, on the selected rows (boolean mask) or all rows."""
        w = self.x.shape[1]
        px, pz = int_to_words(p.x_bits, w), int_to_words(p.z_bits, w)
        if rows is None:
            sign = np.bitwise_count(self.x & pz).sum(axis=1, dtype=np.int64)
            self.phase += ((p.phase_exp + 2 * sign) & 3).astype(np.uint8)
            self.phase &= 3
            self.x ^= px
            self.z ^= pz
            return
        sign = np.bitwise_count(self.x[rows] & pz).sum(axis=1, dtype=np.int64)
        self.phase[rows] = (self.phase[rows] + p.phase_exp + 2 * sign) & 3
        self.x[rows] ^= px
        self.z[rows] ^= pz

    def add_phase(self, amount, rows: np.ndarray | None = None) -> None:
        if rows is None:
            self.phase = ((self.phase.astype(np.int64) + amount) & 3).astype(np.uint8)
        else:
            self.phase = ((self.phase.astype(np.int64) + np.where(rows, amount, 0)) & 3).astype(np.uint8)

    # -- Clifford conjugations (self-inverse unless noted) ---------------
    def conj_pauli(self, p: PauliString) -> None:
        """Q -> p Q p^dagger (sign flip on anticommuting rows)."""
        self.add_phase(2, self.anticommutes_with(p))

    def conj_h(self, q: int) -> None:
        xb, zb = self.bits(q)
        self.add_phase(2, xb & zb)
        diff = xb ^ zb
        self._flip(self.x, q, diff)
        self._flip(self.z, q, diff)

    def conj_s(self, q: int, heisenberg: bool) -> None:
        """Forward ``S Q S^dag`` or, if ``heisenberg``, ``S^dag Q S``."""
        xb, _ = self.bits(q)
        self.add_phase(3 if heisenberg else 1, xb)
        self._flip(self.z, q, xb)

    def conj_cz(self, a: int, b: int) -> None:
        xa, _ = self.bits(a)
        xb, _ = self.bits(b)
        self.add_phase(2, xa & xb)
        self._flip(self.z, a, xb)
        self._flip(self.z, b, xa)

    # -- evaluation ----------------------------------------------------------
    def basis_expectation(self, bits: int) -> np.ndarray:
        """``<b| row |b>`` for computational basis state ``b`` (bit q = qubit q).

        Complex in general; exactly ``+-1``, ``+-i`` or 0.
        """
        w = self.x.shape[1]
        bw = int_to_words(bits, w)
        diag = ~np.any(self.x != 0, axis=1)
        par = np.bitwise_count(self.z & bw).sum(axis=1, dtype=np.int64) & 1
        ph = (self.phase.astype(np.int64) + 2 * par) & 3
        return np.where(diag, np.array([1, 1j, -1, -1j])[ph], 0)
