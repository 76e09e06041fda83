import numpy as np
import pytest
from hypothesis import given, strategies as st

from ndesim.pauli import (
    PauliArray,
    PauliObservable,
    PauliString,
    commutes,
    multiply,
    observable_add,
    observable_scale,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0 + 0j, -1.0])
I2 = np.eye(2, dtype=complex)
LETTER = {"I": I2, "X": X, "Y": Y, "Z": Z}


def kron_oracle(label: str) -> np.ndarray:
    """Independent matrix for a label, built from textbook 2x2 matrices."""
    body = label.lstrip("+-i")
    prefix = label[: len(label) - len(body)]
    phase = {"": 1, "+": 1, "+i": 1j, "i": 1j, "-": -1, "-i": -1j}[prefix]
    out = np.array([[phase]], dtype=complex)
    for ch in body:
        out = np.kron(out, LETTER[ch])
    return out


@st.composite
def paulis(draw, n=None):
    n = n or draw(st.integers(1, 6))
    x = draw(st.integers(0, 2**n - 1))
    z = draw(st.integers(0, 2**n - 1))
    return PauliString(n, x, z, draw(st.integers(0, 3)))


@st.composite
def pauli_pairs(draw, k=2):
    n = draw(st.integers(1, 6))
    return [draw(paulis(n)) for _ in range(k)]


@pytest.mark.parametrize("label", ["+XIZY", "-iZZ", "Y", "+iXY", "-IIII", "YYY"])
def test_label_round_trip_and_matrix(label):
    p = PauliString.from_label(label)
    assert np.allclose(p.to_matrix(), kron_oracle(label))
    q = PauliString.from_label(p.to_label())
    assert q == p


def test_y_convention():
    y = PauliString.from_label("Y")
    assert (y.x_bits, y.z_bits, y.phase_exp) == (1, 1, 1)
    assert np.allclose(y.to_matrix(), Y)


def test_qubit_zero_is_leftmost():
    p = PauliString.from_label("XI")
    assert p.x_bits == 1
    assert np.allclose(p.to_matrix(), np.kron(X, I2))


def test_bad_labels():
    with pytest.raises(ValueError):
        PauliString.from_label("XQ")
    with pytest.raises(ValueError):
        PauliString(2, 4, 0)


def test_multiply_examples():
    x, z = PauliString.from_label("X"), PauliString.from_label("Z")
    assert multiply(x, x) == PauliString(1)
    xz = multiply(x, z)
    assert np.allclose(xz.to_matrix(), X @ Z)
    assert xz.to_label() == "-iY"
    a, b = PauliString.from_label("XZ"), PauliString.from_label("ZZ")
    assert np.allclose((a * b).to_matrix(), np.kron(X @ Z, I2))


def test_multiply_dimension_mismatch():
    with pytest.raises(ValueError):
        multiply(PauliString(1), PauliString(2))
    with pytest.raises(ValueError):
        commutes(PauliString(1), PauliString(2))


@pytest.mark.parametrize(
    "a,b,expected", [("Z", "Z", True), ("X", "Z", False), ("XX", "ZZ", True), ("XY", "ZI", False)]
)
def test_commutes_examples(a, b, expected):
    assert commutes(PauliString.from_label(a), PauliString.from_label(b)) is expected


@given(pauli_pairs(3))
def test_product_matches_matrix_and_is_associative(ps):
    p, q, r = ps
    assert np.allclose((p * q).to_matrix(), p.to_matrix() @ q.to_matrix())
    assert (p * q) * r == p * (q * r)


@given(pauli_pairs(2))
def test_commutes_iff_products_equal(ps):
    p, q = ps
    assert commutes(p, q) == ((p * q) == (q * p))
    pm, qm = p.to_matrix(), q.to_matrix()
    assert commutes(p, q) == np.allclose(pm @ qm, qm @ pm)


@given(paulis())
def test_square_is_identity_up_to_sign(p):
    sq = p * p
    assert sq.is_identity() and sq.phase_exp in (0, 2)
    assert p.hermitian().is_hermitian()


def test_observable_ops():
    z = PauliObservable.from_labels({"Z": 1})
    assert (z + z).terms == {(0, 1): 2}
    assert len(observable_add(z, observable_scale(z, -1))) == 0
    xz = PauliObservable.from_labels({"X": 1, "Z": 1})
    half = observable_scale(xz, 0.5)
    assert dict(half.terms) == {(1, 0): 0.5, (0, 1): 0.5}
    with pytest.raises(ValueError):
        observable_add(z, PauliObservable.magnetization(2))


def test_observable_folds_phase():
    obs = PauliObservable.from_labels({"YI": 2.0, "-ZZ": 1.0})
    assert obs.is_hermitian()
    assert np.allclose(PauliObservable.from_labels({"Y": 2.0}).to_matrix(), 2 * Y)
    assert np.allclose(PauliObservable.from_labels({"-ZZ": 1.0}).to_matrix(), -np.kron(Z, Z))


def test_magnetization():
    m = PauliObservable.magnetization(3)
    expected = sum(kron_oracle(s) for s in ["ZII", "IZI", "IIZ"])
    assert np.allclose(m.to_matrix(), expected)


@given(pauli_pairs(2))
def test_array_left_multiply_and_commutation(ps):
    p, q = ps
    arr = PauliArray.from_strings([q, q])
    assert bool(arr.anticommutes_with(p)[0]) == (not commutes(p, q))
    arr.left_multiply(p, rows=np.array([True, False]))
    assert arr.row(0) == p * q
    assert arr.row(1) == q


def _conj(u, m):
    return u @ m @ u.conj().T


H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
S = np.diag([1, 1j])
CZ = np.diag([1, 1, 1, -1]).astype(complex)


def _embed(n, gate, qubits):
    # dense gate on listed qubits (qubit 0 leftmost), via permutation of tensor axes
    k = len(qubits)
    g = gate.reshape((2,) * (2 * k))
    full = np.eye(2**n, dtype=complex).reshape((2,) * (2 * n))
    out = np.tensordot(g, full, axes=(list(range(k, 2 * k)), list(qubits)))
    out = np.moveaxis(out, list(range(k)), list(qubits))
    return out.reshape(2**n, 2**n)


@given(paulis(3), st.integers(0, 2))
def test_array_single_qubit_conjugations(p, q):
    for method, u in [("h", H), ("s_fwd", S), ("s_heis", S.conj().T)]:
        arr = PauliArray.from_strings([p])
        if method == "h":
            arr.conj_h(q)
        else:
            arr.conj_s(q, heisenberg=(method == "s_heis"))
        uq = _embed(3, u, [q])
        assert np.allclose(arr.row(0).to_matrix(), _conj(uq, p.to_matrix()))


@given(paulis(3), st.permutations([0, 1, 2]))
def test_array_cz(p, perm):
    a, b = perm[0], perm[1]
    arr = PauliArray.from_strings([p])
    arr.conj_cz(a, b)
    u = _embed(3, CZ, [a, b])
    assert np.allclose(arr.row(0).to_matrix(), _conj(u, p.to_matrix()))


def test_basis_expectation():
    arr = PauliArray.from_strings([PauliString.from_label(s) for s in ["ZZ", "XZ", "-IZ", "iZI"]])
    vals = arr.basis_expectation(0b01)
    assert np.allclose(vals, [-1, 0, -1, -1j])


def test_keys_unique_rows():
    arr = PauliArray.from_strings([PauliString.from_label(s) for s in ["XZ", "-XZ", "ZZ"]])
    keys = arr.keys()
    assert keys[0] == keys[1] and keys[0] != keys[2]
