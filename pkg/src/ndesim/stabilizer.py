"""Exact Clifford-circuit evaluation.

Two paths share the bit-packed kernels of :class:`~ndesim.pauli.PauliArray`:

* :class:`StabilizerTableau` evolves a basis state forward (Gottesman-Knill).
* Heisenberg back-propagation pushes each observable term backward through
  the gates, multiplying by noise damping factors on the way, and reads the
  result off the initial basis state.  :func:`batch_term_values` runs this for
  many Clifford configurations and insertion patterns of one skeleton at once.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .circuit import Circuit, InsertionPattern, NamedClifford, PauliInsertion, PauliRotation
from .pauli import PauliArray, PauliObservable, PauliString, int_to_words


class NonCliffordError(ValueError):
    """Raised when a rotation angle is not a multiple of pi/2."""


def _rotation_k(g: PauliRotation) -> int:
    k = g.clifford_k
    if k is None:
        raise NonCliffordError(f"rotation angle {g.angle} is not Clifford")
    return k


def _single(n: int, q: int, letter: str) -> PauliString:
    return PauliString.from_sparse(n, {q: letter})


def conjugate_clifford(arr: PauliArray, g: NamedClifford, heisenberg: bool) -> None:
    """In place: ``U^dag Q U`` if ``heisenberg`` else ``U Q U^dag``."""
    kind, qs = g.kind, g.qubits
    if kind == "H":
        arr.conj_h(qs[0])
    elif kind == "S":
        arr.conj_s(qs[0], heisenberg)
    elif kind in ("X", "Y", "Z"):
        arr.conj_pauli(_single(arr.n_qubits, qs[0], kind))
    elif kind == "CZ":
        arr.conj_cz(*qs)
    elif kind == "CNOT":
        c, t = qs
        arr.conj_h(t)
        arr.conj_cz(c, t)
        arr.conj_h(t)
    elif kind == "CZ_X":
        a, b = qs
        arr.conj_h(a)
        arr.conj_h(b)
        arr.conj_cz(a, b)
        arr.conj_h(a)
        arr.conj_h(b)
    else:  # pragma: no cover - guarded by NamedClifford
        raise ValueError(kind)


def conjugate_rotation(arr: PauliArray, axis: PauliString, k, heisenberg: bool) -> None:
    """Conjugate by ``exp(-i k pi/4 P)`` with scalar or per-row ``k``.

    Heisenberg: anticommuting ``Q -> cos Q + i sin P Q``; forward uses ``-i``.
    """
    anti = arr.anticommutes_with(axis)
    k = np.asarray(k, dtype=np.int64) & 3
    if k.ndim == 0:
        if k == 0 or not anti.any():
            return
        k = np.full(len(arr), int(k))
    odd = anti & ((k & 1) == 1)
    if odd.any():
        arr.left_multiply(axis, rows=odd)
    phase_k = k if heisenberg else (4 - k) & 3
    amount = np.where(odd, phase_k, 0) + np.where(anti & (k == 2), 2, 0)
    arr.add_phase(amount)


def apply_gate_forward(arr: PauliArray, g) -> None:
    if isinstance(g, NamedClifford):
        conjugate_clifford(arr, g, heisenberg=False)
    elif isinstance(g, PauliRotation):
        conjugate_rotation(arr, g.axis, _rotation_k(g), heisenberg=False)
    elif isinstance(g, PauliInsertion):
        arr.conj_pauli(g.pauli)
    else:
        raise TypeError(f"not a gate: {g!r}")


class StabilizerTableau:
    """Pure stabilizer state: rows ``0..n-1`` destabilizers, ``n..2n-1``
    stabilizers, each a signed Pauli.  Mutable scratch object."""

    def __init__(self, n_qubits: int, initial: int = 0):
        self.n_qubits = n_qubits
        rows = [PauliString(n_qubits, 1 << q, 0) for q in range(n_qubits)]
        rows += [PauliString(n_qubits, 0, 1 << q, 2 * (initial >> q & 1)) for q in range(n_qubits)]
        self.rows = PauliArray.from_strings(rows, n_qubits)

    @property
    def stabilizers(self) -> list[PauliString]:
        return self.rows.take(slice(self.n_qubits, None)).to_strings()

    @property
    def destabilizers(self) -> list[PauliString]:
        return self.rows.take(slice(0, self.n_qubits)).to_strings()

    def apply_gate(self, g) -> "StabilizerTableau":
        apply_gate_forward(self.rows, g)
        return self

    def apply_circuit(self, c: Circuit) -> "StabilizerTableau":
        for g in c.gates:
            self.apply_gate(g)
        return self

    def expectation(self, q: PauliString) -> int:
        """``<psi|q|psi>`` for a Hermitian Pauli ``q``; exactly -1, 0 or +1."""
        n = self.n_qubits
        probe = PauliArray.from_strings([q], n)
        stab = self.rows.take(slice(n, None))
        destab = self.rows.take(slice(0, n))
        if stab.anticommutes_rows(probe.x, probe.z).any():
            return 0
        prod = PauliString(n)
        for i in np.flatnonzero(destab.anticommutes_rows(probe.x, probe.z)):
            prod = prod * stab.row(int(i))
        if prod.key != q.key:  # pragma: no cover - tableau invariant
            raise RuntimeError("tableau decomposition failed")
        rel = (q.phase_exp - prod.phase_exp) % 4
        if rel % 2:
            raise ValueError("expectation of a non-Hermitian Pauli")
        return 1 if rel == 0 else -1


def _observable_rows(o: PauliObservable) -> tuple[PauliArray, np.ndarray]:
    """Hermitian term Paulis and their real coefficients."""
    arr = PauliArray.from_strings([p.hermitian() for p, _ in o], o.n_qubits)
    return arr, observable_coefficients(o)


def _backprop(arr: PauliArray, c: Circuit, damp: np.ndarray) -> None:
    for i in range(len(c.gates) - 1, -1, -1):
        ch = c.slot(i)
        if ch is not None:
            damp *= ch.damping_rows(arr)
        g = c.gates[i]
        if isinstance(g, NamedClifford):
            conjugate_clifford(arr, g, heisenberg=True)
        elif isinstance(g, PauliRotation):
            conjugate_rotation(arr, g.axis, _rotation_k(g), heisenberg=True)
        else:
            arr.conj_pauli(g.pauli)


def _check_width(c: Circuit, o: PauliObservable) -> None:
    if c.n_qubits != o.n_qubits:
        raise ValueError("circuit and observable widths differ")


def term_values(c: Circuit, o: PauliObservable, initial: int = 0, noisy: bool = True) -> np.ndarray:
    """Per-term ``Tr[Q C~(|b><b|)]`` for the Hermitian terms of ``o``
    (in ``o`` order; pair with :func:`observable_coefficients`)."""
    _check_width(c, o)
    arr, _ = _observable_rows(o)
    damp = np.ones(len(arr))
    _backprop(arr, c if noisy else c.with_noise(None), damp)
    vals = damp * arr.basis_expectation(initial)
    return _real(vals)


def _real(vals: np.ndarray) -> np.ndarray:
    if vals.size and np.max(np.abs(np.imag(vals))) > 1e-9:
        raise ValueError("expectation has an imaginary part; observable not Hermitian?")
    return np.real(vals)


def heisenberg_noisy_expectation(c: Circuit, o: PauliObservable, initial: int = 0) -> float:
    """Exact noisy expectation of a Clifford circuit with Pauli noise slots."""
    _check_width(c, o)
    arr, coef = _observable_rows(o)
    damp = np.ones(len(arr))
    _backprop(arr, c, damp)
    return float(_real(np.array([np.sum(coef * damp * arr.basis_expectation(initial))]))[0])


def expectation(c: Circuit, o: PauliObservable, initial: int = 0) -> float:
    """Noiseless expectation of a Clifford circuit (noise slots ignored)."""
    return heisenberg_noisy_expectation(c.with_noise(None), o, initial)


def tableau_expectation(c: Circuit, o: PauliObservable, initial: int = 0) -> float:
    """Same as :func:`expectation` via forward tableau evolution."""
    _check_width(c, o)
    tab = StabilizerTableau(c.n_qubits, initial).apply_circuit(c)
    total = 0j
    for p, coef in o:
        herm = p.hermitian()
        # p is X^x Z^z = i^{-#Y} * herm
        total += coef * (1j ** (-herm.phase_exp)) * tab.expectation(herm)
    return float(_real(np.array([total]))[0])


def _pattern_words(patterns: Sequence[InsertionPattern], n_layers: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    px = np.zeros((len(patterns), n_layers, w), dtype=np.uint64)
    pz = np.zeros_like(px)
    for i, pat in enumerate(patterns):
        if len(pat) != n_layers:
            raise ValueError("pattern length does not match layer count")
        for l, p in enumerate(pat.paulis):
            px[i, l] = int_to_words(p.x_bits, w)
            pz[i, l] = int_to_words(p.z_bits, w)
    return px, pz


def batch_term_values(
    template: Circuit,
    o: PauliObservable,
    configs: np.ndarray,
    patterns: Sequence[InsertionPattern] | None = None,
    initial: int = 0,
    max_rows: int = 1 << 18,
) -> np.ndarray:
    """Per-term noisy values for every (pattern, configuration) pair.

    ``template`` is one binding of the skeleton (with its noise slots); its
    rotation angles are replaced per row by ``configs[c, layer] * pi/2`` and,
    when ``patterns`` is given, a Pauli is inserted after each layer end.
    Returns an array of shape ``(n_patterns, n_configs, n_terms)``.
    """
    _check_width(template, o)
    configs = np.atleast_2d(np.asarray(configs, dtype=np.int64))
    L = template.n_layers
    if configs.shape[1] != L:
        raise ValueError("configuration length does not match layer count")
    obs, _ = _observable_rows(o)
    T = len(obs)
    C = configs.shape[0]
    pats = list(patterns) if patterns is not None else [None]
    P = len(pats)
    W = obs.x.shape[1]
    if patterns is not None:
        pat_x, pat_z = _pattern_words(pats, L, W)
        end_layer = {e: l for l, e in enumerate(template.layer_ends)}
    out = np.empty((P, C, T))

    per_pc = T
    block = max(1, max_rows // per_pc)
    flat_pc = P * C
    for start in range(0, flat_pc, block):
        stop = min(flat_pc, start + block)
        idx = np.arange(start, stop)
        p_idx = np.repeat(idx // C, T)
        c_idx = np.repeat(idx % C, T)
        arr = obs.tile(stop - start)
        damp = np.ones(len(arr))
        for i in range(len(template.gates) - 1, -1, -1):
            if patterns is not None and i in end_layer:
                l = end_layer[i]
                anti = arr.anticommutes_rows(pat_x[p_idx, l], pat_z[p_idx, l])
                arr.add_phase(2, anti)
            ch = template.slot(i)
            if ch is not None:
                damp *= ch.damping_rows(arr)
            g = template.gates[i]
            if isinstance(g, NamedClifford):
                conjugate_clifford(arr, g, heisenberg=True)
            elif isinstance(g, PauliRotation):
                conjugate_rotation(arr, g.axis, configs[c_idx, g.layer], heisenberg=True)
            else:
                arr.conj_pauli(g.pauli)
        vals = _real(damp * arr.basis_expectation(initial))
        out.reshape(flat_pc, T)[start:stop] = vals.reshape(stop - start, T)
    return out


def observable_coefficients(o: PauliObservable) -> np.ndarray:
    """Real coefficients of ``o`` against its Hermitian terms, in term order.

    Term ``X^x Z^z`` stored with coefficient ``a`` equals ``a i^{-#Y}`` times
    the Hermitian Pauli; for Hermitian observables that product is real.
    """
    out = []
    for p, a in o:
        c = a * 1j ** (-p.n_y)
        if abs(c.imag) > 1e-12:
            raise ValueError("observable is not Hermitian")
        out.append(c.real)
    return np.array(out)
