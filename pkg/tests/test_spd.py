import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_clifford_circuit, random_observable, random_rotation_circuit
from ndesim import dense
from ndesim.circuit import NamedClifford, ParamCircuit, PauliRotation, build_structured_family
from ndesim.noise import HardwareNoiseProfile, attach_profile
from ndesim.pauli import PauliObservable, PauliString
from ndesim.spd import (
    PathBudgetExceeded,
    PauliPathSet,
    TruncationPolicy,
    propagate_clifford,
    propagate_rotation,
    spd_expectation,
    spd_run,
    split_angle,
)
from ndesim.stabilizer import expectation

P = PauliString.from_label


def paths(labels):
    return PauliPathSet.from_observable(PauliObservable.from_labels(labels))


@pytest.mark.parametrize(
    "theta,k",
    [(0.0, 0), (math.pi / 2, 1), (math.pi, 2), (-math.pi / 2, 3), (0.9, 1), (0.7, 0), (math.pi / 4, 0), (3 * math.pi / 4, 1)],
)
def test_split_angle(theta, k):
    residual, kk = split_angle(theta)
    assert kk == k
    assert abs(residual) <= math.pi / 4 + 1e-12
    assert math.isclose(math.remainder(theta - residual - kk * math.pi / 2, 2 * math.pi), 0.0, abs_tol=1e-12)


@given(st.floats(-20, 20))
def test_split_angle_minimizes_residual(theta):
    residual, k = split_angle(theta)
    best = min(abs(theta - j * math.pi / 2) for j in range(-20, 21))
    assert abs(residual) <= best + 1e-12


def test_hadamard_and_cz_conjugation():
    out = propagate_clifford(paths({"Z": 1}), NamedClifford("H", (0,)))
    assert {p.to_label(): w for p, w in out.as_dict().items()} == {"+X": 1}
    out = propagate_clifford(paths({"XI": 1}), NamedClifford("CZ", (0, 1)))
    assert {p.to_label(): w for p, w in out.as_dict().items()} == {"+XZ": 1}


def test_rotation_matches_matrix_conjugation():
    theta = 0.37
    out = propagate_rotation(paths({"Z": 1}), P("X"), theta)
    assert len(out) == 2
    u = dense.rotation_matrix(P("X"), theta)
    expect = u.conj().T @ P("Z").to_matrix() @ u
    assert np.allclose(out.to_observable().to_matrix(), expect, atol=1e-14)


@pytest.mark.parametrize("theta", [0.0, 0.3, 2.0])
def test_commuting_path_unchanged(theta):
    out = propagate_rotation(paths({"Z": 1}), P("Z"), theta)
    assert {p.to_label(): w for p, w in out.as_dict().items()} == {"+Z": 1}


@pytest.mark.parametrize("seed", range(10))
def test_norm_preserved_without_truncation(seed):
    rng = np.random.default_rng(seed)
    o = random_observable(4, rng, 5)
    ps = PauliPathSet.from_observable(o)
    before = ps.l2_norm_sq()
    for g in random_rotation_circuit(4, 12, rng).gates:
        ps = propagate_rotation(ps, g.axis, g.angle) if isinstance(g, PauliRotation) else propagate_clifford(ps, g)
    assert ps.l2_norm_sq() == pytest.approx(before, rel=1e-12)


def test_truncation_keeps_largest_and_breaks_ties_by_key():
    ps = paths({"ZI": 0.5, "IZ": 0.5, "XX": 0.9, "YY": 0.1})
    out = ps.truncated(TruncationPolicy(2))
    kept = {p.to_label() for p in out.as_dict()}
    # tie between ZI and IZ: IZ has z_bits 0b10 > ZI's 0b01, so ZI wins
    assert kept == {"+XX", "+ZI"}
    # retained weights are unchanged
    assert sorted(abs(w) for w in out.as_dict().values()) == [0.5, 0.9]


@pytest.mark.parametrize("seed", range(8))
def test_clifford_circuits_match_stabilizer(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(1, 7))
    c = random_clifford_circuit(n, 25, rng)
    o = random_observable(n, rng)
    init = int(rng.integers(2**n))
    assert spd_expectation(c, o, init) == pytest.approx(expectation(c, o, init), abs=1e-10)


@pytest.mark.parametrize("seed", range(8))
def test_untruncated_matches_dense(seed):
    rng = np.random.default_rng(200 + seed)
    n = int(rng.integers(1, 7))
    c = random_rotation_circuit(n, 20, rng)
    o = random_observable(n, rng)
    init = int(rng.integers(2**n))
    assert spd_expectation(c, o, init) == pytest.approx(dense.statevector_expectation(c, o, init), abs=1e-10)


def test_noise_damping_matches_density():
    rng = np.random.default_rng(3)
    c = attach_profile(random_rotation_circuit(3, 12, rng, max_weight=2), HardwareNoiseProfile(0.02, 0.01, 0.03, 0.02))
    o = random_observable(3, rng)
    assert spd_expectation(c, o) == pytest.approx(dense.density_expectation(c, o), abs=1e-12)


def test_non_clifford_rejected_by_clifford_step():
    with pytest.raises(ValueError):
        propagate_clifford(paths({"X": 1}), PauliRotation(P("Z"), 0.3))


def _z_center(D):
    return PauliObservable.from_labels({"Z" + "I" * (2 * D): 1})


@pytest.mark.parametrize("D", [1, 2, 3, 4, 5, 6])
def test_structured_family_path_doubling(D):
    pc = build_structured_family(D, 0.0, math.pi / 4)
    full = spd_run(pc.bind(), _z_center(D))
    assert full.value == pytest.approx(1.0, abs=1e-12)
    assert full.path_counts[:D] == [2 ** (d + 1) for d in range(D)]
    tail = ParamCircuit(pc.n_qubits, pc.layers[D:], pc.angles[D:])
    res = spd_run(tail.bind(), _z_center(D))
    w = np.abs(res.final_paths.weights)
    assert len(w) == 2**D
    assert np.allclose(w, 2 ** (-D / 2), atol=1e-12)
    assert spd_expectation(pc.bind(), _z_center(D), 0, TruncationPolicy(2**D)) == pytest.approx(1.0, abs=1e-12)
    assert spd_expectation(pc.bind(), _z_center(D), 0, TruncationPolicy(2**D - 1)) < 1.0 - 1e-3


def test_structured_error_nonincreasing_in_budget():
    D = 4
    c = build_structured_family(D, 0.0, math.pi / 4).bind()
    errs = [abs(spd_expectation(c, _z_center(D), 0, TruncationPolicy(m)) - 1.0) for m in range(1, 2**D + 1)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-12


def test_budget_one_exact_for_depth_one():
    c = build_structured_family(1, 0.0, math.pi / 4).bind()
    assert spd_expectation(c, _z_center(1), 0, TruncationPolicy(2)) == pytest.approx(1.0, abs=1e-12)


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(0)


def test_live_path_cap_aborts():
    c = build_structured_family(4, 0.0, math.pi / 4).bind()
    assert spd_run(c, _z_center(4), max_live=16).value == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(PathBudgetExceeded):
        spd_run(c, _z_center(4), max_live=15)
