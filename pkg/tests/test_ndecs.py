import itertools
import math

import numpy as np
import pytest

from ndesim import dense
from ndesim.circuit import (
    Layer,
    NamedClifford,
    ParamCircuit,
    PauliRotation,
    build_structured_family,
    build_trotter_ising,
    compile_native,
    single_qubit_circuit,
)
from ndesim.ndecs import (
    ConfigSample,
    FitProblem,
    NoisyTarget,
    all_patterns,
    collect_data,
    fit_coefficients,
    grid_estimates,
    layer_end_noise,
    reconstruct,
    run_ndecs,
    sample_configs,
    sample_patterns,
    theorem1_oracle,
)
from ndesim.noise import HardwareNoiseProfile, axis_noise
from ndesim.pauli import PauliObservable, PauliString
from ndesim.quasiprob import optimal_decomposition

P = PauliString.from_label
XZ = PauliObservable.from_labels({"X": 1, "Z": 1})
PROFILE = HardwareNoiseProfile(0.05, 0.02, 0.03, 0.04)


def fig2_target(theta=0.3, phi=1.1, g1=0.05, g2=0.08):
    return NoisyTarget(single_qubit_circuit(["X", "Z"], [theta, phi]), XZ, axis_gamma=(g1, g2))


def two_qubit_target():
    pc = ParamCircuit(
        2,
        (Layer(P("XI")), Layer(P("ZZ"), (NamedClifford("H", (1,)),), (NamedClifford("CZ", (0, 1)),))),
        (0.4, -0.9),
    )
    o = PauliObservable.from_labels({"ZI": 1, "XX": 0.5, "IY": -0.3})
    return NoisyTarget(pc, o, initial=0b10, profile=PROFILE, axis_gamma=0.03)


def three_qubit_target():
    pc = ParamCircuit(
        3,
        (
            Layer(P("XYI")),
            Layer(P("IZZ"), (NamedClifford("H", (1,)), NamedClifford("CZ_X", (1, 2))), (NamedClifford("CNOT", (0, 1)),)),
        ),
        (1.0, 0.7),
    )
    return NoisyTarget(pc, PauliObservable.from_labels({"ZZI": 1, "IXZ": 0.5}), profile=PROFILE)


# -- configuration sampling -------------------------------------------------


def test_all_clifford_circuit_gives_single_config():
    pc = single_qubit_circuit(["X", "Z"], [math.pi, math.pi / 2])
    s = sample_configs(pc, XZ, M_C=1)
    assert s.k.tolist() == [[2, 1]]


def test_trotter_configs_distinct_and_nonzero():
    pc = build_trotter_ising(4, 1)
    o = PauliObservable.magnetization(4)
    s = sample_configs(pc, o, M_C=50, seed=3)
    assert len(s) == 50
    assert len({row.tobytes() for row in s.k}) == 50
    assert np.all(s.noiseless != 0)
    # stored values are the exact stabilizer values
    assert s.noiseless[0] == pytest.approx(dense.statevector_expectation(pc.bind([k * math.pi / 2 for k in s.k[0]]), o))


def test_structured_mirror_configs_nonzero_and_paired():
    D = 6
    pc = build_structured_family(D, 0.0, math.pi / 4)
    o = PauliObservable.from_labels({"Z" + "I" * (2 * D): 1})
    s = sample_configs(pc, o, M_C=40, constraint_mode="mirror", seed=1)
    assert np.all(s.noiseless != 0)
    assert np.array_equal(s.k, s.k[:, ::-1])


def test_unconstrained_structured_sampling_hits_zero_configs():
    D = 3
    pc = build_structured_family(D, 0.0, math.pi / 4)
    o = PauliObservable.from_labels({"Z" + "I" * (2 * D): 1})
    s = sample_configs(pc, o, M_C=10, seed=0)
    assert s.n_draws > len(s)


def test_config_sampling_deterministic():
    pc = build_trotter_ising(3, 1)
    o = PauliObservable.magnetization(3)
    a = sample_configs(pc, o, M_C=20, seed=9)
    b = sample_configs(pc, o, M_C=20, seed=9)
    assert np.array_equal(a.k, b.k)


def test_budget_exhaustion_warns():
    pc = single_qubit_circuit(["X", "Z"], [math.pi, math.pi / 2])
    with pytest.warns(RuntimeWarning):
        s = sample_configs(pc, XZ, M_C=3)
    assert len(s) == 1


def test_zero_only_configs_raise():
    pc = single_qubit_circuit(["X"], [math.pi / 2])
    with pytest.raises(RuntimeError):
        sample_configs(pc, PauliObservable.from_labels({"X": 1}), M_C=1)


def test_sampling_validation():
    pc = build_trotter_ising(3, 1)
    o = PauliObservable.magnetization(3)
    with pytest.raises(ValueError):
        sample_configs(pc, o, M_C=0)
    with pytest.raises(ValueError):
        sample_configs(pc, o, M_C=1, constraint_mode="bogus")
    with pytest.raises(ValueError):
        sample_configs(pc, o, M_C=1, constraint_mode="mirror")  # odd layer count


# -- pattern sampling -------------------------------------------------------


def test_single_pattern_is_identity():
    pats = sample_patterns(5, 3, 1)
    assert len(pats) == 1 and pats[0].is_identity()


def test_pattern_space_exhausted():
    pats = sample_patterns(2, 1, 16)
    assert len({tuple(p.key for p in pat.paulis) for pat in pats}) == 16
    assert pats[0].is_identity()


def test_patterns_reproducible_distinct_identity_first():
    a = sample_patterns(6, 4, 30, seed=5)
    b = sample_patterns(6, 4, 30, seed=5)
    assert [p.paulis for p in a] == [p.paulis for p in b]
    assert a[0].is_identity()
    assert len({tuple(p.key for p in pat.paulis) for pat in a}) == 30
    assert all(p.is_hermitian() for pat in a for p in pat.paulis)


def test_all_patterns_count():
    assert len(all_patterns(2, 2)) == 256


# -- data collection and fit ------------------------------------------------


def test_zero_noise_product_coefficients_fit_exactly():
    pc = build_trotter_ising(3, 1).with_angles([0.3, -0.5, 0.2, 0.7, -1.1, 0.4, 0.9, 0.1, -0.6])
    pc = ParamCircuit(3, pc.layers[:3], pc.angles[:3])
    o = PauliObservable.magnetization(3)
    t = NoisyTarget(pc, o)
    k = np.array(list(itertools.product(range(4), repeat=3)), dtype=np.uint8)
    a = np.array([math.prod(optimal_decomposition(th).coefficients[kk] for th, kk in zip(pc.angles, row)) for row in k])
    s = ConfigSample(k, np.zeros(len(k)))
    prob = collect_data(t, s, sample_patterns(3, 3, 20, seed=2))
    assert np.max(np.abs(prob.design @ a - prob.rhs)) < 1e-10
    assert prob.device_calls == (len(k) + 1) * 20


def test_identity_pattern_row_matches_plain_values():
    t = fig2_target()
    s = ConfigSample(np.array([[0, 0], [1, 3]], dtype=np.uint8), np.zeros(2))
    prob = collect_data(t, s, sample_patterns(2, 1, 4, seed=1))
    for j, row in enumerate(s.k):
        c = t.attach_noise(t.circuit.bind([kk * math.pi / 2 for kk in row]))
        assert prob.design[0, j] == pytest.approx(dense.noisy_expectation(c, XZ, 0, dense.DeviceEmulatorConfig(n_shots=None)), abs=1e-12)
    assert prob.rhs[0] == pytest.approx(dense.density_expectation(t.noisy_circuit(), XZ), abs=1e-12)


def test_observation1_noisy_fit_is_valid_noiseless_decomposition():
    gamma = 0.07
    axis = P("Z")
    ptm = lambda th: dense.channel_ptm(PauliRotation(axis, th)).matrix
    noise = dense.channel_ptm(axis_noise(axis, gamma), 1).matrix
    for theta in (0.3, math.pi / 4, 2.2, -1.0):
        design = np.stack([(noise @ ptm(k * math.pi / 2)).ravel() for k in range(4)], axis=1)
        rhs = (noise @ ptm(theta)).ravel()
        prob = FitProblem(design, rhs, tuple([None] * len(rhs)))
        b = fit_coefficients(prob).b
        assert np.allclose(sum(bk * ptm(k * math.pi / 2) for k, bk in enumerate(b)), ptm(theta), atol=1e-8)
        a = optimal_decomposition(theta).array
        assert np.max(np.abs(design @ a - rhs)) < 1e-12
        if abs(abs(math.sin(theta)) - abs(math.cos(theta))) < 1e-12:
            assert np.allclose(b, a, atol=1e-8)


@pytest.mark.parametrize("gamma", [0.0, 0.1])
def test_observation2_single_column_fit(gamma):
    theta = 0.8
    pc = single_qubit_circuit(["Z"], [theta], prefix=["H"])
    o = PauliObservable.from_labels({"X": 1})
    t = NoisyTarget(pc, o, axis_gamma=gamma)
    s = ConfigSample(np.zeros((1, 1), dtype=np.uint8), np.array([1.0]))
    prob = collect_data(t, s, sample_patterns(1, 1, 1))
    coeffs = fit_coefficients(prob)
    assert coeffs.b[0] == pytest.approx(math.cos(theta), abs=1e-12)
    assert reconstruct(coeffs, s, math.cos(theta)).eps_abs < 1e-12


def test_fit_matches_direct_solve():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(12, 12)) + 4 * np.eye(12)
    y = rng.normal(size=12)
    b = fit_coefficients(FitProblem(A, y, tuple(range(12)))).b
    assert np.allclose(b, np.linalg.solve(A, y), atol=1e-10)


def test_fit_minimum_norm_and_ridge():
    A = np.array([[1.0, 1.0]])
    prob = FitProblem(A, np.array([2.0]), (None,))
    assert np.allclose(fit_coefficients(prob).b, [1.0, 1.0])
    ridged = fit_coefficients(prob, ridge=1.0).b
    assert np.all(np.abs(ridged) < 1.0)


def test_fit_rejects_zero_design():
    with pytest.raises(ValueError):
        fit_coefficients(FitProblem(np.zeros((2, 2)), np.ones(2), (None, None)))


def test_reconstruct_errors():
    s = ConfigSample(np.zeros((2, 1), dtype=np.uint8), np.array([1.0, -1.0]))
    from ndesim.ndecs import CoefficientVector

    est = reconstruct(CoefficientVector(np.array([0.75, 0.25]), 0.0), s, truth=0.4)
    assert est.value == pytest.approx(0.5)
    assert est.eps_abs == pytest.approx(0.1)
    assert est.eps_rel == pytest.approx(0.25)
    with pytest.raises(ValueError):
        reconstruct(CoefficientVector(np.ones(3), 0.0), s)


def _small_trotter_target(shots):
    pc = compile_native(build_trotter_ising(3, 1))
    t = NoisyTarget(pc, PauliObservable.magnetization(3), profile=HardwareNoiseProfile(1e-3, 2e-3, 2e-3, 2e-3))
    return t, dense.DeviceEmulatorConfig(n_shots=shots)


def test_run_deterministic_and_linear():
    t, cfg = _small_trotter_target(2**12)
    a = run_ndecs(t, 30, 8, cfg, seed=4)
    b = run_ndecs(t, 30, 8, cfg, seed=4)
    assert np.array_equal(a.problem.design, b.problem.design)
    assert np.array_equal(a.problem.rhs, b.problem.rhs)
    assert a.estimate.value == b.estimate.value
    scaled = run_ndecs(t.scaled(-2.5), 30, 8, cfg, seed=4)
    assert scaled.estimate.value == pytest.approx(-2.5 * a.estimate.value, rel=1e-12)


def test_small_trotter_accuracy():
    t, cfg = _small_trotter_target(2**14)
    truth = t.noiseless_value()
    errs = [run_ndecs(t, 60, 12, cfg, seed=s, truth=truth).estimate.eps_rel for s in range(3)]
    assert np.mean(errs) < 0.05


def test_grid_cells_are_nested_slices():
    t, cfg = _small_trotter_target(2**12)
    truth = t.noiseless_value()
    cells = grid_estimates(t, [(10, 4), (40, 12)], cfg, seed=2, truth=truth)
    full = run_ndecs(t, 40, 12, cfg, seed=2, truth=truth)
    assert cells[1].estimate.value == pytest.approx(full.estimate.value, rel=1e-12)
    assert cells[0].device_calls == 11 * 4


# -- exactness oracle -------------------------------------------------------


@pytest.mark.parametrize("target", [fig2_target(), fig2_target(2.0, -0.4, 0.2, 0.0), two_qubit_target(), three_qubit_target()], ids=["fig2", "fig2-b", "two-qubit", "three-qubit"])
def test_theorem1_oracle_passes(target):
    rep = theorem1_oracle(target)
    assert rep.passed
    assert abs(rep.value - rep.truth) < 1e-8
    assert rep.telescoping_ok


def test_theorem1_zero_noise():
    assert theorem1_oracle(fig2_target(0.7, 0.2, 0.0, 0.0)).passed


def test_counterexample_without_insertions():
    theta, phi, g1, g2 = 0.3, 1.1, 0.05, 0.08
    t = fig2_target(theta, phi, g1, g2)
    rep = theorem1_oracle(t, insertions=False, configs=[(0, 0)])
    assert rep.b[0] == pytest.approx((1 - 2 * g2) * math.sin(theta) * math.sin(phi) + math.cos(theta), abs=1e-12)
    assert rep.noisy_residual < 1e-12
    assert not rep.passed
    assert abs(rep.value - rep.truth) > 1e-3
    assert not theorem1_oracle(t, insertions=False).passed


def test_oracle_rejects_noninvertible_channel():
    with pytest.raises(ValueError):
        theorem1_oracle(fig2_target(0.3, 1.1, 0.5, 0.1))


def test_noise_ahead_of_first_rotation_rejected():
    pc = ParamCircuit(2, (Layer(P("XI"), (NamedClifford("CZ", (0, 1)),)),), (0.3,))
    t = NoisyTarget(pc, PauliObservable.from_labels({"ZZ": 1}), profile=PROFILE)
    with pytest.raises(ValueError):
        layer_end_noise(t.noisy_circuit())


def test_layer_end_noise_moves_factors_through_cliffords():
    pc = ParamCircuit(2, (Layer(P("XI")), Layer(P("IZ"), (NamedClifford("H", (0,)),), (NamedClifford("CZ", (0, 1)), NamedClifford("H", (1,))))), (0.3, 0.5))
    t = NoisyTarget(pc, PauliObservable.from_labels({"ZZ": 1}), profile=HardwareNoiseProfile(0.1, 0.0, 0.0, 0.0))
    chans = layer_end_noise(t.noisy_circuit())
    # ZZ after CZ, pushed through H on qubit 1, becomes ZX
    assert [p.to_label() for p, _ in chans[1].factors if p.weight] [0] == "+ZX"
    assert chans[0].factors == ()
