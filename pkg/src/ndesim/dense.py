"""Dense reference simulation and the emulated noisy device.

* statevectors (batched over a leading axis) and small full unitaries,
* density-matrix and Pauli-transfer-matrix oracles for a few qubits,
* an exact Pauli-basis Heisenberg engine (``4**n`` real coefficients) that
  evaluates noisy non-Clifford circuits without sampling,
* the device emulator: Pauli-error trajectories (exhaustive or sampled) or
  the exact Pauli-basis engine, followed by binomial shot noise.

Amplitude ordering follows ``numpy.kron`` with qubit 0 as the leftmost
factor, i.e. qubit ``q`` is bit ``n-1-q`` of the amplitude index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .circuit import Circuit, NamedClifford, PauliInsertion, PauliRotation
from .noise import PauliNoiseChannel
from .pauli import PauliArray, PauliObservable, PauliString, popcount
from .spd import PathBudgetExceeded, spd_run
from .stabilizer import conjugate_clifford, observable_coefficients

MAX_STATEVECTOR_QUBITS = 20
MAX_PAULI_BASIS_QUBITS = 10
MAX_PTM_QUBITS = 3
EXHAUSTIVE_LIMIT = 1 << 16

_SQ2 = 1 / math.sqrt(2)
_H = np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)
_HH = np.kron(_H, _H)
LOCAL_MATRICES = {
    "H": _H,
    "S": np.diag([1, 1j]),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1, -1]).astype(complex),
    "CZ": _CZ,
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ_X": _HH @ _CZ @ _HH,
}


class WidthError(ValueError):
    """Circuit too wide for the requested dense method."""


def _guard(n: int, limit: int, what: str) -> None:
    if n > limit:
        raise WidthError(f"{what} limited to {limit} qubits, got {n}")


# ---------------------------------------------------------------------------
# full matrices (oracle path)
# ---------------------------------------------------------------------------


def embed(mat: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Full ``2**n`` matrix of a local gate acting on ``qubits``."""
    k = len(qubits)
    full = np.eye(2**n, dtype=complex).reshape((2,) * (2 * n))
    out = np.tensordot(mat.reshape((2,) * (2 * k)), full, axes=(list(range(k, 2 * k)), list(qubits)))
    out = np.moveaxis(out, list(range(k)), list(qubits))
    return out.reshape(2**n, 2**n)


def rotation_matrix(axis: PauliString, theta: float) -> np.ndarray:
    """``exp(-i theta P / 2)`` as a full matrix."""
    return math.cos(theta / 2) * np.eye(2**axis.n_qubits) - 1j * math.sin(theta / 2) * axis.to_matrix()


def gate_unitary(g, n: int) -> np.ndarray:
    if isinstance(g, NamedClifford):
        return embed(LOCAL_MATRICES[g.kind], g.qubits, n)
    if isinstance(g, PauliRotation):
        return rotation_matrix(g.axis, g.angle)
    if isinstance(g, PauliInsertion):
        return g.pauli.to_matrix()
    raise TypeError(f"not a gate: {g!r}")


def unitary(c: Circuit) -> np.ndarray:
    """Full circuit unitary (noise ignored); small widths only."""
    _guard(c.n_qubits, 12, "unitary")
    u = np.eye(2**c.n_qubits, dtype=complex)
    for g in c.gates:
        u = gate_unitary(g, c.n_qubits) @ u
    return u


def basis_vector(n: int, initial: int) -> np.ndarray:
    """``|b>`` where bit q of ``initial`` is the value of qubit q."""
    psi = np.zeros(2**n, dtype=complex)
    psi[_reverse_bits(initial, n)] = 1.0
    return psi


def _reverse_bits(v: int, n: int) -> int:
    return int(format(v, f"0{n}b")[::-1], 2) if n else 0


def apply_pauli_channel_dm(rho: np.ndarray, ch: PauliNoiseChannel) -> np.ndarray:
    for p, w in ch.factors:
        pm = p.to_matrix()
        rho = w * rho + (1 - w) * pm @ rho @ pm.conj().T
    return rho


def density_evolve(c: Circuit, initial: int = 0) -> np.ndarray:
    """Final density matrix including noise slots (oracle, <= 8 qubits)."""
    _guard(c.n_qubits, 8, "density matrix")
    psi = basis_vector(c.n_qubits, initial)
    rho = np.outer(psi, psi.conj())
    for i, g in enumerate(c.gates):
        u = gate_unitary(g, c.n_qubits)
        rho = u @ rho @ u.conj().T
        ch = c.slot(i)
        if ch is not None:
            rho = apply_pauli_channel_dm(rho, ch)
    return rho


def density_expectation(c: Circuit, o: PauliObservable, initial: int = 0) -> float:
    rho = density_evolve(c, initial)
    return _real_scalar(np.trace(o.to_matrix() @ rho))


def _real_scalar(v: complex) -> float:
    if abs(np.imag(v)) > 1e-9:
        raise ValueError(f"imaginary residue {np.imag(v):.3g} in expectation")
    return float(np.real(v))


# ---------------------------------------------------------------------------
# Pauli transfer matrices
# ---------------------------------------------------------------------------


def pauli_basis(n: int) -> list[PauliString]:
    """Hermitian Paulis indexed by ``x | z << n``."""
    return [PauliString(n, a & ((1 << n) - 1), a >> n).hermitian() for a in range(4**n)]


@dataclass(frozen=True)
class PauliTransferMatrix:
    n_qubits: int
    matrix: np.ndarray

    def __matmul__(self, other: "PauliTransferMatrix") -> "PauliTransferMatrix":
        return PauliTransferMatrix(self.n_qubits, self.matrix @ other.matrix)

    def __add__(self, other: "PauliTransferMatrix") -> "PauliTransferMatrix":
        return PauliTransferMatrix(self.n_qubits, self.matrix + other.matrix)

    def __rmul__(self, c: float) -> "PauliTransferMatrix":
        return PauliTransferMatrix(self.n_qubits, c * self.matrix)

    @classmethod
    def identity(cls, n: int) -> "PauliTransferMatrix":
        return cls(n, np.eye(4**n))


def _ptm_from_map(n: int, fn) -> PauliTransferMatrix:
    basis = pauli_basis(n)
    mats = [p.to_matrix() for p in basis]
    out = np.empty((4**n, 4**n))
    for j, pj in enumerate(mats):
        img = fn(pj)
        for i, pi in enumerate(mats):
            out[i, j] = np.real(np.trace(pi @ img)) / 2**n
    return PauliTransferMatrix(n, out)


def ptm_unitary(u: np.ndarray) -> PauliTransferMatrix:
    n = int(round(math.log2(u.shape[0])))
    _guard(n, MAX_PTM_QUBITS, "PTM")
    return _ptm_from_map(n, lambda m: u @ m @ u.conj().T)


def channel_ptm(obj, n: int | None = None) -> PauliTransferMatrix:
    """Transfer matrix of a gate, a Pauli noise channel or a whole circuit."""
    if isinstance(obj, Circuit):
        n = obj.n_qubits
        _guard(n, MAX_PTM_QUBITS, "PTM")
        out = PauliTransferMatrix.identity(n)
        for i, g in enumerate(obj.gates):
            out = channel_ptm(g, n) @ out
            ch = obj.slot(i)
            if ch is not None:
                out = channel_ptm(ch, n) @ out
        return out
    if isinstance(obj, PauliNoiseChannel):
        n = obj.n_qubits or n
        _guard(n, MAX_PTM_QUBITS, "PTM")
        return PauliTransferMatrix(n, np.diag([obj.damping(p) for p in pauli_basis(n)]))
    if n is None:
        n = obj.axis.n_qubits if isinstance(obj, PauliRotation) else None
        if isinstance(obj, PauliInsertion):
            n = obj.pauli.n_qubits
    if n is None:
        raise ValueError("n required")
    _guard(n, MAX_PTM_QUBITS, "PTM")
    return ptm_unitary(gate_unitary(obj, n))


# ---------------------------------------------------------------------------
# batched statevectors
# ---------------------------------------------------------------------------


def _apply_local(psi: np.ndarray, mat: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Apply a local matrix to a batch ``(B, 2**n)`` of states."""
    b = psi.shape[0]
    k = len(qubits)
    t = psi.reshape((b,) + (2,) * n)
    axes = [q + 1 for q in qubits]
    out = np.tensordot(mat.reshape((2,) * (2 * k)), t, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(b, 2**n)


@lru_cache(maxsize=128)
def _pauli_action(n: int, x: int, z: int, phase: int) -> tuple[np.ndarray, np.ndarray]:
    """Index permutation and factors with ``(P psi)[perm[j]] = fac[j] psi[j]``."""
    xi, zi = _reverse_bits(x, n), _reverse_bits(z, n)
    idx = np.arange(2**n)
    par = np.bitwise_count(idx & zi) & 1
    fac = (1j**phase) * (1 - 2 * par.astype(float))
    return idx ^ xi, fac


def apply_pauli(psi: np.ndarray, p: PauliString, rows: np.ndarray | None = None) -> np.ndarray:
    perm, fac = _pauli_action(p.n_qubits, p.x_bits, p.z_bits, p.phase_exp)
    if rows is None:
        out = np.empty_like(psi)
        out[:, perm] = psi * fac
        return out
    out = psi.copy()
    sub = psi[rows]
    tmp = np.empty_like(sub)
    tmp[:, perm] = sub * fac
    out[rows] = tmp
    return out


def apply_gate_sv(psi: np.ndarray, g, n: int) -> np.ndarray:
    if isinstance(g, NamedClifford):
        return _apply_local(psi, LOCAL_MATRICES[g.kind], g.qubits, n)
    if isinstance(g, PauliRotation):
        half = g.angle / 2
        return math.cos(half) * psi - 1j * math.sin(half) * apply_pauli(psi, g.axis)
    if isinstance(g, PauliInsertion):
        return apply_pauli(psi, g.pauli)
    raise TypeError(f"not a gate: {g!r}")


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def expectation(self, o: PauliObservable) -> float:
        return float(pauli_expectations(self.amplitudes[None, :], o)[0] @ observable_coefficients(o))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def run_statevector(c: Circuit, initial: int = 0) -> StateVector:
    """Noiseless final state (noise slots ignored)."""
    _guard(c.n_qubits, MAX_STATEVECTOR_QUBITS, "statevector")
    psi = basis_vector(c.n_qubits, initial)[None, :]
    for g in c.gates:
        psi = apply_gate_sv(psi, g, c.n_qubits)
    return StateVector(c.n_qubits, psi[0])


def pauli_expectations(psi: np.ndarray, o: PauliObservable) -> np.ndarray:
    """``(B, T)`` values ``<psi_b| Q_t |psi_b>`` for the Hermitian terms of ``o``."""
    cols = []
    for p, _ in o:
        h = p.hermitian()
        v = np.einsum("bi,bi->b", psi.conj(), apply_pauli(psi, h))
        if np.max(np.abs(v.imag), initial=0) > 1e-9:
            raise ValueError("imaginary residue in Pauli expectation")
        cols.append(v.real)
    return np.stack(cols, axis=1)


def statevector_expectation(c: Circuit, o: PauliObservable, initial: int = 0) -> float:
    return run_statevector(c, initial).expectation(o)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def slot_outcomes(ch: PauliNoiseChannel) -> list[tuple[PauliString, float]]:
    """Distinct error Paulis of a channel with their total probabilities."""
    dist: dict[tuple[int, int], float] = {(0, 0): 1.0}
    n = ch.n_qubits
    for p, w in ch.factors:
        if w == 1.0:
            continue
        nxt: dict[tuple[int, int], float] = {}
        for (x, z), pr in dist.items():
            nxt[(x, z)] = nxt.get((x, z), 0.0) + pr * w
            k = (x ^ p.x_bits, z ^ p.z_bits)
            nxt[k] = nxt.get(k, 0.0) + pr * (1 - w)
        dist = nxt
    return [(PauliString(n, x, z), pr) for (x, z), pr in sorted(dist.items()) if pr > 0]


def exhaustive_count(c: Circuit) -> int:
    total = 1
    for ch in c.noise or ():
        if ch is not None:
            total *= len(slot_outcomes(ch))
    return total


def trajectory_term_values_exhaustive(c: Circuit, o: PauliObservable, initial: int = 0) -> np.ndarray:
    """Exact noisy per-term values by enumerating every Pauli-error pattern."""
    _guard(c.n_qubits, MAX_STATEVECTOR_QUBITS, "statevector")
    n = c.n_qubits
    psi = basis_vector(n, initial)[None, :]
    probs = np.ones(1)
    for i, g in enumerate(c.gates):
        psi = apply_gate_sv(psi, g, n)
        ch = c.slot(i)
        if ch is None:
            continue
        outs = slot_outcomes(ch)
        if len(outs) == 1 and outs[0][0].is_identity():
            continue
        branches, bprobs = [], []
        for p, pr in outs:
            branches.append(psi if p.is_identity() else apply_pauli(psi, p))
            bprobs.append(probs * pr)
        psi = np.concatenate(branches)
        probs = np.concatenate(bprobs)
    return probs @ pauli_expectations(psi, o)


def trajectory_term_values_sampled(
    c: Circuit, o: PauliObservable, initial: int, n_traj: int, rng: np.random.Generator
) -> np.ndarray:
    """Monte Carlo average over ``n_traj`` sampled Pauli-error trajectories."""
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    _guard(c.n_qubits, MAX_STATEVECTOR_QUBITS, "statevector")
    n = c.n_qubits
    psi = np.repeat(basis_vector(n, initial)[None, :], n_traj, axis=0)
    for i, g in enumerate(c.gates):
        psi = apply_gate_sv(psi, g, n)
        ch = c.slot(i)
        if ch is None:
            continue
        for p, w in ch.factors:
            if w == 1.0:
                continue
            hit = rng.random(n_traj) >= w
            if hit.any():
                psi = apply_pauli(psi, p, rows=hit)
    return pauli_expectations(psi, o).mean(axis=0)


# ---------------------------------------------------------------------------
# exact Pauli-basis Heisenberg engine
# ---------------------------------------------------------------------------


class PauliBasisEngine:
    """Heisenberg propagation of a ``4**n`` real coefficient vector over the
    Hermitian Pauli basis (index ``x | z << n``).  Exact for any circuit with
    Pauli noise; cost per gate is ``O(4**n)``."""

    def __init__(self, n_qubits: int):
        _guard(n_qubits, MAX_PAULI_BASIS_QUBITS, "Pauli-basis engine")
        self.n = n_qubits
        size = 4**n_qubits
        idx = np.arange(size, dtype=np.int64)
        mask = (1 << n_qubits) - 1
        self._xs = (idx & mask).astype(np.uint64)
        self._zs = (idx >> n_qubits).astype(np.uint64)
        self._ny = np.bitwise_count(self._xs & self._zs).astype(np.int64)
        self._diag = np.flatnonzero(self._xs == 0)
        self._cache: dict = {}

    def _all_paulis(self) -> PauliArray:
        size = 4**self.n
        arr = PauliArray.empty(self.n, size)
        arr.x[:, 0] = self._xs
        arr.z[:, 0] = self._zs
        arr.phase[:] = (self._ny & 3).astype(np.uint8)
        return arr

    def _sign_from(self, arr: PauliArray, rows=slice(None)) -> tuple[np.ndarray, np.ndarray]:
        new_idx = (arr.x[:, 0] | (arr.z[:, 0] << np.uint64(self.n))).astype(np.int64)
        ny = np.bitwise_count(arr.x[:, 0] & arr.z[:, 0]).astype(np.int64)
        rel = (arr.phase.astype(np.int64) - ny) & 3
        if np.any(rel[rows] & 1):  # pragma: no cover - conjugation keeps Hermiticity
            raise RuntimeError("non-Hermitian image in Pauli-basis map")
        return new_idx, 1.0 - rel.astype(float)  # rel 0 -> +1, rel 2 -> -1

    def _anti(self, p: PauliString) -> np.ndarray:
        px, pz = np.uint64(p.x_bits), np.uint64(p.z_bits)
        return (np.bitwise_count((self._xs & pz) ^ (self._zs & px)) & 1).astype(bool)

    def clifford_map(self, g: NamedClifford, heisenberg: bool = True):
        key = ("C", g, heisenberg)
        if key not in self._cache:
            arr = self._all_paulis()
            conjugate_clifford(arr, g, heisenberg=heisenberg)
            self._cache[key] = self._sign_from(arr)
        return self._cache[key]

    def rotation_map(self, axis: PauliString):
        key = ("R", axis.key)
        if key not in self._cache:
            anti = self._anti(axis)
            arr = self._all_paulis()
            arr.left_multiply(axis)
            arr.add_phase(1)  # i P sigma_a
            partner, sign = self._sign_from(arr, anti)
            self._cache[key] = (np.flatnonzero(anti), partner, sign)
        return self._cache[key]

    def damping_vector(self, ch: PauliNoiseChannel) -> np.ndarray:
        key = ("N", ch)
        if key not in self._cache:
            d = np.ones(4**self.n)
            for p, w in ch.factors:
                if w != 1.0:
                    d[self._anti(p)] *= 2 * w - 1
            self._cache[key] = d
        return self._cache[key]

    def observable_vector(self, o: PauliObservable) -> np.ndarray:
        v = np.zeros(4**self.n)
        for (p, _), c in zip(o, observable_coefficients(o)):
            v[p.x_bits | (p.z_bits << self.n)] += c
        return v

    def _apply(self, g, ch, v: np.ndarray, forward: bool) -> np.ndarray:
        if not forward and ch is not None:
            v *= self.damping_vector(ch)
        if isinstance(g, NamedClifford):
            new_idx, sign = self.clifford_map(g, heisenberg=not forward)
            out = np.empty_like(v)
            out[new_idx] = sign * v
            v = out
        elif isinstance(g, PauliRotation):
            k = g.clifford_k
            if k != 0:
                anti_idx, partner, sign = self.rotation_map(g.axis)
                if k is None:
                    cth, sth = math.cos(g.angle), math.sin(g.angle)
                else:
                    cth, sth = _CLIFFORD_COS_SIN[k]
                if forward:
                    sth = -sth
                # anticommuting a: sigma_a -> cos sigma_a + sin s_a sigma_{partner(a)}
                moved = sth * sign[anti_idx] * v[anti_idx]
                v[anti_idx] *= cth
                v[partner[anti_idx]] += moved
        else:
            v[self._anti(g.pauli)] *= -1
        if forward and ch is not None:
            v *= self.damping_vector(ch)
        return v

    def backpropagate(self, c: Circuit, v: np.ndarray) -> np.ndarray:
        if c.n_qubits != self.n:
            raise ValueError("width mismatch")
        v = v.copy()
        for i in range(len(c.gates) - 1, -1, -1):
            v = self._apply(c.gates[i], c.slot(i), v, forward=False)
        return v

    def evolve_state(self, c: Circuit, initial: int = 0) -> np.ndarray:
        """Pauli-basis coordinates ``r_a = Tr[sigma_a rho]`` of the noisy
        output state, propagated forward from a basis state."""
        if c.n_qubits != self.n:
            raise ValueError("width mismatch")
        r = np.zeros(4**self.n)
        zs = self._zs[self._diag]
        r[self._diag] = 1.0 - 2.0 * (np.bitwise_count(zs & np.uint64(initial)) & 1)
        for i, g in enumerate(c.gates):
            r = self._apply(g, c.slot(i), r, forward=True)
        return r

    def readout(self, v: np.ndarray, initial: int = 0) -> float:
        zs = self._zs[self._diag]
        signs = 1.0 - 2.0 * (np.bitwise_count(zs & np.uint64(initial)) & 1)
        return float(v[self._diag] @ signs)

    def term_values(self, c: Circuit, o: PauliObservable, initial: int = 0) -> np.ndarray:
        r = self.evolve_state(c, initial)
        return np.array([r[p.x_bits | (p.z_bits << self.n)] for p, _ in o])

    def expectation(self, c: Circuit, o: PauliObservable, initial: int = 0) -> float:
        return self.readout(self.backpropagate(c, self.observable_vector(o)), initial)


_CLIFFORD_COS_SIN = {1: (0.0, 1.0), 2: (-1.0, 0.0), 3: (0.0, -1.0)}
_ENGINES: dict[int, PauliBasisEngine] = {}


def pauli_basis_engine(n: int) -> PauliBasisEngine:
    if n not in _ENGINES:
        _ENGINES.clear()
        _ENGINES[n] = PauliBasisEngine(n)
    return _ENGINES[n]


# ---------------------------------------------------------------------------
# emulated device
# ---------------------------------------------------------------------------

METHODS = ("auto", "exhaustive", "sampled", "pauli-basis", "pauli-paths")
# live-path cap when "auto" tries exact Pauli-path propagation
AUTO_PATH_CAP = 1 << 14
SHOT_MODES = ("per-term", "split")


@dataclass(frozen=True)
class DeviceEmulatorConfig:
    """Noisy-device emulation settings.

    ``n_shots=None`` means infinite shots (exact values).  ``method='auto'``
    picks the cheaper exact method (error-pattern enumeration or the
    Pauli-basis engine up to 10 qubits), then tries exact Pauli-path
    propagation under a live-path cap, and falls back to sampled
    trajectories.  ``shot_mode='split'`` divides the shot budget evenly
    over the observable's terms instead of giving each term ``n_shots``.
    """

    n_shots: int | None = 2**14
    n_trajectories: int | str = 2048
    seed: int = 0
    method: str = "auto"
    shot_mode: str = "per-term"

    def __post_init__(self):
        if self.n_shots is not None and self.n_shots < 1:
            raise ValueError("n_shots must be >= 1")
        if self.n_trajectories != "exhaustive" and int(self.n_trajectories) < 1:
            raise ValueError("n_trajectories must be >= 1 or 'exhaustive'")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.shot_mode not in SHOT_MODES:
            raise ValueError(f"shot_mode must be one of {SHOT_MODES}")

    def resolve_method(self, c: Circuit) -> str:
        if self.method != "auto":
            return self.method
        if self.n_trajectories == "exhaustive" or not c.is_noisy():
            return "exhaustive"
        return exact_method(c) or "sampled"


def exact_method(c: Circuit) -> str | None:
    """Cheaper exact noisy method for ``c``, or None when neither fits.

    Enumeration costs ``count * 2**n`` per gate and the Pauli-basis engine
    ``4**n``.
    """
    n = c.n_qubits
    count = exhaustive_count(c)
    enum_ok = count <= EXHAUSTIVE_LIMIT and count * 2**n <= 1 << 24 and n <= MAX_STATEVECTOR_QUBITS
    basis_ok = n <= MAX_PAULI_BASIS_QUBITS
    if enum_ok and (not basis_ok or count * 2**n <= 4**n):
        return "exhaustive"
    if basis_ok:
        return "pauli-basis"
    return "exhaustive" if enum_ok else None


def noisy_term_values(
    c: Circuit,
    o: PauliObservable,
    initial: int = 0,
    cfg: DeviceEmulatorConfig = DeviceEmulatorConfig(),
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Noisy per-term values (no shot noise) by the configured method."""
    method = cfg.resolve_method(c)
    if method == "exhaustive":
        return trajectory_term_values_exhaustive(c, o, initial)
    if method == "pauli-basis":
        return pauli_basis_engine(c.n_qubits).term_values(c, o, initial)
    if method == "pauli-paths":
        return path_term_values(c, o, initial)
    if cfg.method == "auto":
        try:
            return path_term_values(c, o, initial, AUTO_PATH_CAP)
        except PathBudgetExceeded:
            pass
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    return trajectory_term_values_sampled(c, o, initial, int(cfg.n_trajectories), rng)


def path_term_values(c: Circuit, o: PauliObservable, initial: int = 0, max_live: int | None = None) -> np.ndarray:
    """Exact noisy term values by untruncated Pauli-path propagation with
    noise damping; width-independent, cost set by the live path count."""
    out = []
    for p, _ in o:
        term = PauliObservable.from_paulis([(p.hermitian(), 1.0)], o.n_qubits)
        out.append(spd_run(c, term, initial, max_live=max_live).value)
    return np.array(out)


def apply_shot_noise(
    values: np.ndarray, n_shots: int | None, rng: np.random.Generator, shot_mode: str = "per-term"
) -> np.ndarray:
    """Replace each exact Pauli value ``p`` by ``2 Binomial(m, (1+p)/2)/m - 1``."""
    values = np.asarray(values, dtype=float)
    if n_shots is None:
        return values.copy()
    m = n_shots
    if shot_mode == "split":
        m = max(1, n_shots // values.shape[-1])
    prob = np.clip((1.0 + values) / 2.0, 0.0, 1.0)
    return 2.0 * rng.binomial(m, prob) / m - 1.0


def noisy_expectation(
    c: Circuit,
    o: PauliObservable,
    initial: int = 0,
    cfg: DeviceEmulatorConfig = DeviceEmulatorConfig(),
    rng: np.random.Generator | None = None,
) -> float:
    """One emulated device measurement of ``<O>`` on the noisy circuit."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    vals = noisy_term_values(c, o, initial, cfg, rng)
    vals = apply_shot_noise(vals, cfg.n_shots, rng, cfg.shot_mode)
    return float(vals @ observable_coefficients(o))


def all_error_patterns(c: Circuit):
    """Iterate ``(probability, [(gate index, Pauli), ...])`` over every error
    pattern; used by tests as an independent enumeration."""
    slots = [(i, slot_outcomes(ch)) for i, ch in enumerate(c.noise or ()) if ch is not None]
    for combo in itertools.product(*[outs for _, outs in slots]):
        prob = 1.0
        errs = []
        for (i, _), (p, pr) in zip(slots, combo):
            prob *= pr
            errs.append((i, p))
        yield prob, errs
