"""Oracle and invariant checks behind the ``verify`` command.

Each check returns a ``CheckResult`` with the worst observed deviation, so a
failure report says by how much a tolerance was missed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import dense
from ..circuit import Circuit, Layer, NamedClifford, ParamCircuit, PauliRotation, apply_insertion_pattern, single_qubit_circuit
from ..ndecs import NoisyTarget, theorem1_oracle
from ..noise import HardwareNoiseProfile, attach_axis_noise, attach_profile, axis_noise
from ..pauli import PauliObservable, PauliString
from ..quasiprob import bennink_decomposition, critical_noise, noisy_decomposition, optimal_decomposition
from ..random_circuits import random_clifford_circuit, random_observable, random_rotation_circuit
from ..spd import spd_expectation
from ..stabilizer import expectation, heisenberg_noisy_expectation

P = PauliString.from_label
X_PLUS_Z = PauliObservable.from_labels({"X": 1, "Z": 1})
ORACLE_PROFILE = HardwareNoiseProfile(0.05, 0.02, 0.03, 0.04)


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float = 0.0
    tolerance: float = 0.0
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.0e} ({self.seconds:.1f}s)"


def _timed(fn: Callable[[], CheckResult]) -> CheckResult:
    t0 = time.perf_counter()
    res = fn()
    res.seconds = time.perf_counter() - t0
    return res


def _rotation_ptms(axis: PauliString) -> list[np.ndarray]:
    return [dense.channel_ptm(PauliRotation(axis, k * math.pi / 2)).matrix for k in range(4)]


def _combo(a, ptms) -> np.ndarray:
    return sum(c * m for c, m in zip(a, ptms))


# -- gate decompositions ----------------------------------------------------


def check_bennink_identity(n_angles: int = 16) -> CheckResult:
    """Three-term decomposition on [0, pi/4] reproduces the rotation channel."""
    ptms = _rotation_ptms(P("Z"))
    worst = 0.0
    for t in np.linspace(0, math.pi / 4, n_angles):
        d = bennink_decomposition(t)
        target = dense.channel_ptm(PauliRotation(P("Z"), t)).matrix
        worst = max(worst, float(np.abs(_combo(d.coefficients, ptms) - target).max()))
    return CheckResult("bennink-identity", worst <= 1e-12, worst, 1e-12)


def check_lemma2_identity(n_angles: int = 64) -> CheckResult:
    """Four-term minimal decomposition: channel identity and its l1 norm."""
    worst_ptm = worst_l1 = 0.0
    for label in ("Z", "XZ"):
        axis = P(label)
        ptms = _rotation_ptms(axis)
        for t in np.linspace(0, 2 * math.pi, n_angles, endpoint=False):
            d = optimal_decomposition(t)
            target = dense.channel_ptm(PauliRotation(axis, t)).matrix
            worst_ptm = max(worst_ptm, float(np.abs(_combo(d.coefficients, ptms) - target).max()))
            worst_l1 = max(worst_l1, abs(d.l1 - (abs(math.sin(t)) + abs(math.cos(t)))))
    ok = worst_ptm <= 1e-12 and worst_l1 <= 1e-14
    return CheckResult("rotation-decomposition", ok, worst_ptm, 1e-12, {"l1_worst": worst_l1})


def check_noisy_decomposition(n_angles: int = 24, gammas=(0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.45)) -> CheckResult:
    """Decomposition of ``noise o rotation``: identity, l1 formula, and
    nonnegative coefficients above the critical noise."""
    worst_ptm = worst_l1 = 0.0
    sign_failures = 0
    for label in ("Z", "XZ"):
        axis = P(label)
        ptms = _rotation_ptms(axis)
        for t in np.linspace(0, 2 * math.pi, n_angles, endpoint=False):
            for g in gammas:
                d = noisy_decomposition(t, g)
                c = Circuit(axis.n_qubits, (PauliRotation(axis, t),), (axis_noise(axis, g),))
                worst_ptm = max(worst_ptm, float(np.abs(_combo(d.coefficients, ptms) - dense.channel_ptm(c).matrix).max()))
                expect = max(1.0, (1 - 2 * g) * (abs(math.sin(t)) + abs(math.cos(t))))
                worst_l1 = max(worst_l1, abs(d.l1 - expect))
                if g > critical_noise(t) and min(d.coefficients) < 0:
                    sign_failures += 1
    ok = worst_ptm <= 1e-12 and worst_l1 <= 1e-12 and sign_failures == 0
    return CheckResult("noisy-decomposition", ok, worst_ptm, 1e-12, {"l1_worst": worst_l1, "sign_failures": sign_failures})


# -- single-qubit noisy fixtures --------------------------------------------


def two_rotation_circuit(theta: float, phi: float, g1: float, g2: float, inserted: bool = False) -> Circuit:
    """``R_X(theta)`` then ``R_Z(phi)``, each followed by dephasing along
    its own axis; ``inserted`` adds X and Z after the rotations."""
    c = attach_axis_noise(single_qubit_circuit(["X", "Z"], [theta, phi]).bind(), [g1, g2])
    if inserted:
        c = apply_insertion_pattern(c, [P("X"), P("Z")])
    return c


def check_two_rotation_formulas(
    thetas=(0.3, 2.0, -1.3, 0.0), phis=(1.1, -0.4, 2.9, math.pi / 2), gammas=(0.0, 0.05, 0.2, 0.45)
) -> CheckResult:
    """Closed-form noisy expectations with and without Pauli insertions."""
    cfg = dense.DeviceEmulatorConfig(n_shots=None, n_trajectories="exhaustive")
    worst = 0.0
    for theta in thetas:
        for phi in phis:
            for g1 in gammas:
                for g2 in gammas:
                    x = (1 - 2 * g1) * (1 - 2 * g2) * math.sin(theta) * math.sin(phi)
                    z = (1 - 2 * g1) * math.cos(theta)
                    plain = dense.noisy_term_values(two_rotation_circuit(theta, phi, g1, g2), X_PLUS_Z, 0, cfg)
                    ins = dense.noisy_term_values(two_rotation_circuit(theta, phi, g1, g2, True), X_PLUS_Z, 0, cfg)
                    worst = max(worst, abs(plain[0] - x), abs(plain[1] - z), abs(plain.sum() - (x + z)))
                    worst = max(worst, abs(ins[0] - x), abs(ins[1] + z), abs(ins.sum() - (x - z)))
    return CheckResult("two-rotation-noisy-formulas", worst <= 1e-12, worst, 1e-12)


# -- exactness oracle -------------------------------------------------------


def oracle_targets() -> list[tuple[str, NoisyTarget]]:
    """Small invertible-noise targets on one to three qubits."""
    two = ParamCircuit(
        2,
        (Layer(P("XI")), Layer(P("ZZ"), (NamedClifford("H", (1,)),), (NamedClifford("CZ", (0, 1)),))),
        (0.4, -0.9),
    )
    three = ParamCircuit(
        3,
        (
            Layer(P("XYI")),
            Layer(P("IZZ"), (NamedClifford("H", (1,)), NamedClifford("CZ_X", (1, 2))), (NamedClifford("CNOT", (0, 1)),)),
        ),
        (1.0, 0.7),
    )
    out = [
        (f"one-qubit theta={t} phi={f}", NoisyTarget(single_qubit_circuit(["X", "Z"], [t, f]), X_PLUS_Z, axis_gamma=(g1, g2)))
        for t, f, g1, g2 in ((0.3, 1.1, 0.05, 0.08), (2.0, -0.4, 0.2, 0.0), (-1.3, 2.9, 0.4, 0.3))
    ]
    out.append(("two-qubit", NoisyTarget(two, PauliObservable.from_labels({"ZI": 1, "XX": 0.5, "IY": -0.3}), 0b10, ORACLE_PROFILE, 0.03)))
    out.append(("three-qubit", NoisyTarget(three, PauliObservable.from_labels({"ZZI": 1, "IXZ": 0.5}), 0, ORACLE_PROFILE)))
    return out


def check_theorem1_oracle() -> CheckResult:
    """Exhaustive insertion patterns and exact data recover the noiseless value."""
    worst = 0.0
    failed = []
    for name, t in oracle_targets():
        rep = theorem1_oracle(t)
        worst = max(worst, abs(rep.value - rep.truth))
        if not (rep.passed and rep.telescoping_ok):
            failed.append(name)
    return CheckResult("insertion-oracle", not failed and worst <= 1e-8, worst, 1e-8, {"failed": failed})


def check_counterexample_guard(theta: float = 0.3, phi: float = 1.1, g1: float = 0.05, g2: float = 0.08) -> CheckResult:
    """Without insertions a single all-identity coefficient fits the noisy
    data exactly yet misses the noiseless value; the oracle must fail."""
    t = NoisyTarget(single_qubit_circuit(["X", "Z"], [theta, phi]), X_PLUS_Z, axis_gamma=(g1, g2))
    rep = theorem1_oracle(t, insertions=False, configs=[(0, 0)])
    b0 = (1 - 2 * g2) * math.sin(theta) * math.sin(phi) + math.cos(theta)
    full = theorem1_oracle(t, insertions=False)
    fit_err = abs(rep.b[0] - b0)
    miss = abs(rep.value - rep.truth)
    ok = fit_err <= 1e-12 and rep.noisy_residual <= 1e-12 and not rep.passed and miss > 1e-3 and not full.passed
    return CheckResult("no-insertion-counterexample", ok, fit_err, 1e-12, {"noiseless_miss": miss, "full_config_passed": full.passed})


# -- engine cross-validation ------------------------------------------------


def check_clifford_engines(n_circuits: int = 200, max_qubits: int = 8, seed: int = 10) -> CheckResult:
    """Stabilizer propagation against dense statevectors on random Clifford circuits."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_circuits):
        n = int(rng.integers(1, max_qubits + 1))
        c = random_clifford_circuit(n, int(rng.integers(5, 40)), rng)
        o = random_observable(n, rng)
        init = int(rng.integers(2**n))
        worst = max(worst, abs(expectation(c, o, init) - dense.statevector_expectation(c, o, init)))
    return CheckResult("stabilizer-vs-dense", worst <= 1e-10, worst, 1e-10, {"circuits": n_circuits})


def check_spd_engine(n_circuits: int = 50, max_qubits: int = 10, seed: int = 11) -> CheckResult:
    """Untruncated sparse Pauli dynamics against dense statevectors."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_circuits):
        n = int(rng.integers(1, max_qubits + 1))
        c = random_rotation_circuit(n, int(rng.integers(5, 30)), rng)
        o = random_observable(n, rng)
        init = int(rng.integers(2**n))
        worst = max(worst, abs(spd_expectation(c, o, init) - dense.statevector_expectation(c, o, init)))
    return CheckResult("spd-vs-dense", worst <= 1e-10, worst, 1e-10, {"circuits": n_circuits})


def check_noisy_heisenberg(n_circuits: int = 20, max_qubits: int = 4, seed: int = 12) -> CheckResult:
    """Damped Heisenberg propagation of noisy Clifford circuits against
    exhaustive dense trajectories."""
    rng = np.random.default_rng(seed)
    cfg = dense.DeviceEmulatorConfig(n_shots=None, n_trajectories="exhaustive", method="exhaustive")
    worst = 0.0
    for _ in range(n_circuits):
        n = int(rng.integers(2, max_qubits + 1))
        c = random_clifford_circuit(n, int(rng.integers(4, 10)), rng)
        prof = HardwareNoiseProfile(*rng.uniform(0, 0.2, 4))
        c = attach_profile(c, prof)
        o = random_observable(n, rng)
        init = int(rng.integers(2**n))
        worst = max(worst, abs(heisenberg_noisy_expectation(c, o, init) - dense.noisy_expectation(c, o, init, cfg)))
    return CheckResult("noisy-heisenberg-vs-trajectories", worst <= 1e-10, worst, 1e-10, {"circuits": n_circuits})


VERIFY_CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_bennink_identity,
    check_lemma2_identity,
    check_noisy_decomposition,
    check_two_rotation_formulas,
    check_theorem1_oracle,
    check_counterexample_guard,
    check_clifford_engines,
    check_spd_engine,
    check_noisy_heisenberg,
)


def run_checks(checks=VERIFY_CHECKS) -> list[CheckResult]:
    return [_timed(fn) for fn in checks]
