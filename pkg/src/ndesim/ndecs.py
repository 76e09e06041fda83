"""Noisy-device-enhanced classical simulation (NDE-CS).

The target ``<O>`` of a parameterized circuit is written as
``sum_k b_k <O>_k`` over Clifford configurations ``k``.  The coefficients are
learned from a noisy device: for every Pauli insertion pattern, the noisy
target value must equal ``sum_k b_k`` times the noisy value of configuration
``k`` with the same insertions.  The learned ``b`` is then reused with exact
noiseless stabilizer values.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import dense
from .circuit import (
    Circuit,
    CliffordConfiguration,
    InsertionPattern,
    ParamCircuit,
    PauliRotation,
    apply_insertion_pattern,
)
from .noise import HardwareNoiseProfile, PauliNoiseChannel, attach_axis_noise, attach_profile, invert_channel
from .pauli import PauliArray, PauliObservable, PauliString
from .quasiprob import optimal_decomposition
from .seeding import stream
from .stabilizer import batch_term_values, conjugate_clifford, observable_coefficients

CONSTRAINT_MODES = ("none", "mirror")

# stream keys for the per-purpose random generators derived from one seed
_CONFIGS, _PATTERNS, _DESIGN_SHOTS, _RHS_SHOTS, _TRAJECTORIES = range(1, 6)


# ---------------------------------------------------------------------------
# problem description and result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoisyTarget:
    """Parameterized circuit, observable and initial basis state, plus the
    Pauli noise the emulated device applies (hardware profile after two-qubit
    gates and/or axis dephasing after every rotation)."""

    circuit: ParamCircuit
    observable: PauliObservable
    initial: int = 0
    profile: HardwareNoiseProfile | None = None
    axis_gamma: float | tuple[float, ...] | None = None

    def __post_init__(self):
        if self.circuit.n_qubits != self.observable.n_qubits:
            raise ValueError("circuit and observable widths differ")

    @property
    def n_qubits(self) -> int:
        return self.circuit.n_qubits

    @property
    def n_layers(self) -> int:
        return self.circuit.n_layers

    def attach_noise(self, c: Circuit) -> Circuit:
        if self.profile is not None and not self.profile.is_zero():
            c = attach_profile(c, self.profile)
        if self.axis_gamma is not None:
            c = attach_axis_noise(c, self.axis_gamma)
        return c

    def noisy_circuit(self, pattern: InsertionPattern | None = None) -> Circuit:
        """The noisy target at its own angles, with an optional pattern."""
        c = self.attach_noise(self.circuit.bind())
        return c if pattern is None else apply_insertion_pattern(c, pattern)

    def noiseless_value(self) -> float:
        return dense.statevector_expectation(self.circuit.bind(), self.observable, self.initial)

    def scaled(self, factor: float) -> "NoisyTarget":
        return replace(self, observable=factor * self.observable)


@dataclass(frozen=True)
class ConfigSample:
    """Distinct Clifford configurations with nonzero noiseless value, in
    draw order."""

    k: np.ndarray  # (M_C, L) uint8
    noiseless: np.ndarray  # (M_C,)
    n_draws: int = 0

    @property
    def configs(self) -> list[CliffordConfiguration]:
        return [CliffordConfiguration(tuple(int(v) for v in row)) for row in self.k]

    def __len__(self) -> int:
        return len(self.k)

    def head(self, m: int) -> "ConfigSample":
        return ConfigSample(self.k[:m], self.noiseless[:m], self.n_draws)


@dataclass(frozen=True)
class FitProblem:
    """``design[p, c]``: noisy value of configuration ``c`` under pattern
    ``p``; ``rhs[p]``: noisy target value under pattern ``p``."""

    design: np.ndarray
    rhs: np.ndarray
    patterns: tuple[InsertionPattern, ...]
    device_calls: int = 0

    def __post_init__(self):
        if self.design.ndim != 2 or self.design.shape[0] != len(self.rhs):
            raise ValueError("design and rhs shapes disagree")
        if len(self.patterns) != len(self.rhs):
            raise ValueError("one pattern per equation required")

    @property
    def m_c(self) -> int:
        return self.design.shape[1]

    @property
    def m_p(self) -> int:
        return self.design.shape[0]

    def subproblem(self, m_c: int, m_p: int) -> "FitProblem":
        """Leading ``m_p`` equations over the first ``m_c`` configurations."""
        m_c, m_p = min(m_c, self.m_c), min(m_p, self.m_p)
        return FitProblem(self.design[:m_p, :m_c], self.rhs[:m_p], self.patterns[:m_p], (m_c + 1) * m_p)


@dataclass(frozen=True)
class CoefficientVector:
    b: np.ndarray
    residual_norm: float
    rank: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.b)):
            raise ValueError("non-finite coefficients")


@dataclass(frozen=True)
class NdecsEstimate:
    value: float
    truth: float | None = None
    eps_abs: float | None = None
    eps_rel: float | None = None


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _draw(probs: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random((m, len(probs)))
    return (u[:, :, None] >= cdf[None, :, :3]).sum(axis=2).astype(np.uint8)


def _draw_probabilities(angles: Sequence[float], mode: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-draw-slot probabilities and, in mirror mode, the slot->layer map."""
    a = np.array([optimal_decomposition(t).array for t in angles])
    if mode == "none":
        return np.abs(a) / np.abs(a).sum(axis=1, keepdims=True), None
    L = len(angles)
    if L % 2:
        raise ValueError("mirror mode needs an even number of layers")
    w = np.abs(a[: L // 2] * a[::-1][: L // 2])
    tot = w.sum(axis=1, keepdims=True)
    if np.any(tot == 0):
        raise ValueError("mirror-paired layers share no Clifford index")
    slot = np.concatenate([np.arange(L // 2), np.arange(L // 2)[::-1]])
    return w / tot, slot


def _noiseless_values(template: Circuit, o: PauliObservable, k: np.ndarray, initial: int) -> np.ndarray:
    terms = batch_term_values(template, o, k, initial=initial)[0]
    coefs = observable_coefficients(o)
    # term values are exactly -1, 0 or 1; fsum makes the zero test exact
    return np.array([math.fsum(row * coefs) for row in terms])


def sample_configs(
    pc: ParamCircuit,
    o: PauliObservable,
    initial: int = 0,
    M_C: int = 1,
    constraint_mode: str = "none",
    seed: int = 0,
    budget_factor: int = 100,
) -> ConfigSample:
    """Draw Clifford configurations with ``P(k_l) ~ |a_k^(l)|``.

    Duplicates and configurations whose noiseless value is exactly zero are
    rejected.  ``constraint_mode='mirror'`` pairs layer ``l`` with layer
    ``L-1-l`` and draws one shared index per pair with probability
    ``~ |a_k^(l) a_k^(L-1-l)|``.
    """
    if M_C < 1:
        raise ValueError("M_C must be >= 1")
    if constraint_mode not in CONSTRAINT_MODES:
        raise ValueError(f"constraint_mode must be one of {CONSTRAINT_MODES}")
    probs, slot = _draw_probabilities(pc.angles, constraint_mode)
    template = pc.bind()
    rng = stream(seed, _CONFIGS)
    budget = budget_factor * M_C
    seen: set[bytes] = set()
    kept_k: list[np.ndarray] = []
    kept_v: list[float] = []
    draws = 0
    while len(kept_k) < M_C and draws < budget:
        m = min(budget - draws, max(64, 2 * (M_C - len(kept_k))))
        cand = _draw(probs, m, rng)
        if slot is not None:
            cand = cand[:, slot]
        fresh = []
        for row in cand:
            draws += 1
            key = row.tobytes()
            if key in seen:
                continue
            seen.add(key)
            fresh.append(row)
        if not fresh:
            continue
        fresh_k = np.array(fresh)
        vals = _noiseless_values(template, o, fresh_k, initial)
        for row, v in zip(fresh_k, vals):
            if v != 0.0 and len(kept_k) < M_C:
                kept_k.append(row)
                kept_v.append(v)
        if len(kept_k) >= M_C:
            # count only the draws needed to reach M_C
            break
    if not kept_k:
        raise RuntimeError(f"no configuration with nonzero value in {draws} draws")
    if len(kept_k) < M_C:
        warnings.warn(f"retained {len(kept_k)} of {M_C} configurations after {draws} draws", RuntimeWarning, stacklevel=2)
    return ConfigSample(np.array(kept_k, dtype=np.uint8), np.array(kept_v), draws)


def pattern_space_size(n_layers: int, n_qubits: int) -> int:
    return 4 ** (n_qubits * n_layers)


def all_patterns(n_layers: int, n_qubits: int) -> list[InsertionPattern]:
    """Every insertion pattern, all-identity first."""
    paulis = [PauliString(n_qubits, x, z).hermitian() for z in range(2**n_qubits) for x in range(2**n_qubits)]
    return [InsertionPattern(combo) for combo in itertools.product(paulis, repeat=n_layers)]


def sample_patterns(n_layers: int, n_qubits: int, M_P: int, seed: int = 0) -> list[InsertionPattern]:
    """All-identity pattern plus ``M_P - 1`` distinct uniformly random ones.

    When ``M_P`` reaches the size of the pattern space the whole space is
    returned in canonical order.
    """
    if M_P < 1:
        raise ValueError("M_P must be >= 1")
    space = pattern_space_size(n_layers, n_qubits)
    if M_P >= space:
        if M_P > space:
            warnings.warn(f"M_P={M_P} exceeds the {space} available patterns", RuntimeWarning, stacklevel=2)
        return all_patterns(n_layers, n_qubits)
    rng = stream(seed, _PATTERNS)
    weights = 1 << np.arange(n_qubits, dtype=object)
    out = [InsertionPattern.identity(n_qubits, n_layers)]
    seen = {tuple((p.x_bits, p.z_bits) for p in out[0].paulis)}
    while len(out) < M_P:
        bits = rng.integers(0, 2, size=(n_layers, 2, n_qubits), dtype=np.uint8)
        xz = [(int(bits[l, 0].astype(object) @ weights), int(bits[l, 1].astype(object) @ weights)) for l in range(n_layers)]
        key = tuple(xz)
        if key in seen:
            continue
        seen.add(key)
        out.append(InsertionPattern(tuple(PauliString(n_qubits, x, z).hermitian() for x, z in xz)))
    return out


# ---------------------------------------------------------------------------
# data collection, fit and reconstruction
# ---------------------------------------------------------------------------


def exact_device(c: Circuit) -> dense.DeviceEmulatorConfig:
    """Shot-free device that evaluates noisy values exactly."""
    method = dense.exact_method(c)
    if method is None:
        raise dense.WidthError(f"no exact noisy method for {c.n_qubits} qubits")
    return dense.DeviceEmulatorConfig(n_shots=None, method=method)


def target_term_values(
    target: NoisyTarget,
    patterns: Sequence[InsertionPattern],
    device: dense.DeviceEmulatorConfig | None,
    seed: int = 0,
) -> np.ndarray:
    """Noisy per-term target values (no shot noise), one row per pattern."""
    rng = stream(seed, _TRAJECTORIES)
    out = []
    for pat in patterns:
        c = target.noisy_circuit(pat)
        cfg = device if device is not None else exact_device(c)
        out.append(dense.noisy_term_values(c, target.observable, target.initial, cfg, rng))
    return np.array(out).reshape(len(patterns), -1)


def collect_data(
    target: NoisyTarget,
    sample: ConfigSample,
    patterns: Sequence[InsertionPattern],
    device: dense.DeviceEmulatorConfig | None = None,
    seed: int = 0,
) -> FitProblem:
    """Emulate the ``(M_C + 1) M_P`` noisy device evaluations.

    Configuration circuits are evaluated exactly by Heisenberg propagation
    and target circuits by the dense emulator; both then receive shot noise
    per ``device``.  ``device=None`` means exact, shot-free data.
    """
    if len(sample) == 0:
        raise ValueError("no configurations")
    patterns = tuple(patterns)
    o = target.observable
    coefs = observable_coefficients(o)
    template = target.noisy_circuit()
    design_terms = batch_term_values(template, o, sample.k, patterns, target.initial)
    rhs_terms = target_term_values(target, patterns, device, seed)
    if device is not None and device.n_shots is not None:
        design_terms = dense.apply_shot_noise(design_terms, device.n_shots, stream(seed, _DESIGN_SHOTS), device.shot_mode)
        rhs_terms = dense.apply_shot_noise(rhs_terms, device.n_shots, stream(seed, _RHS_SHOTS), device.shot_mode)
    return FitProblem(design_terms @ coefs, rhs_terms @ coefs, patterns, (len(sample) + 1) * len(patterns))


def fit_coefficients(problem: FitProblem, rcond: float = 1e-10, ridge: float = 0.0) -> CoefficientVector:
    """Minimum-norm least squares via SVD with relative cutoff ``rcond``;
    ``ridge > 0`` adds Tikhonov damping ``s / (s**2 + ridge)``."""
    A, y = problem.design, problem.rhs
    if A.size == 0:
        raise ValueError("empty system")
    if not np.any(A):
        raise ValueError("design matrix is identically zero")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rcond * s[0]
    inv = np.zeros_like(s)
    inv[keep] = s[keep] / (s[keep] ** 2 + ridge)
    b = vt.T @ (inv * (u.T @ y))
    return CoefficientVector(b, float(np.linalg.norm(A @ b - y)), int(keep.sum()))


def reconstruct(coeffs: CoefficientVector, sample: ConfigSample, truth: float | None = None) -> NdecsEstimate:
    """``sum_k b_k <O>_k`` with the exact noiseless configuration values."""
    if len(coeffs.b) != len(sample):
        raise ValueError("coefficient count does not match configurations")
    value = float(coeffs.b @ sample.noiseless)
    if truth is None:
        return NdecsEstimate(value)
    eps_abs = abs(value - truth)
    eps_rel = eps_abs / abs(truth) if truth != 0 else None
    return NdecsEstimate(value, truth, eps_abs, eps_rel)


@dataclass
class NdecsRun:
    sample: ConfigSample
    patterns: list[InsertionPattern]
    problem: FitProblem
    coeffs: CoefficientVector
    estimate: NdecsEstimate
    wall_seconds: float = 0.0


def run_ndecs(
    target: NoisyTarget,
    M_C: int,
    M_P: int,
    device: dense.DeviceEmulatorConfig | None = None,
    seed: int = 0,
    truth: float | None = None,
    constraint_mode: str = "none",
    ridge: float = 0.0,
) -> NdecsRun:
    """One full protocol run: sample, collect, fit, reconstruct."""
    t0 = time.perf_counter()
    sample = sample_configs(target.circuit, target.observable, target.initial, M_C, constraint_mode, seed)
    patterns = sample_patterns(target.n_layers, target.n_qubits, M_P, seed)
    problem = collect_data(target, sample, patterns, device, seed)
    coeffs = fit_coefficients(problem, ridge=ridge)
    est = reconstruct(coeffs, sample, truth)
    return NdecsRun(sample, patterns, problem, coeffs, est, time.perf_counter() - t0)


@dataclass(frozen=True)
class GridCell:
    M_C: int
    M_P: int
    estimate: NdecsEstimate
    device_calls: int
    retained_configs: int


def grid_estimates(
    target: NoisyTarget,
    cells: Iterable[tuple[int, int]],
    device: dense.DeviceEmulatorConfig | None = None,
    seed: int = 0,
    truth: float | None = None,
    constraint_mode: str = "none",
) -> list[GridCell]:
    """Estimates for several ``(M_C, M_P)`` cells from one data set.

    Data are collected once at the largest sizes; each cell fits the leading
    block of that data, so cells of one seed are nested.
    """
    cells = list(cells)
    mc_max = max(c for c, _ in cells)
    mp_max = max(p for _, p in cells)
    sample = sample_configs(target.circuit, target.observable, target.initial, mc_max, constraint_mode, seed)
    patterns = sample_patterns(target.n_layers, target.n_qubits, mp_max, seed)
    full = collect_data(target, sample, patterns, device, seed)
    out = []
    for mc, mp in cells:
        sub = full.subproblem(mc, mp)
        coeffs = fit_coefficients(sub)
        est = reconstruct(coeffs, sample.head(sub.m_c), truth)
        out.append(GridCell(mc, mp, est, sub.device_calls, sub.m_c))
    return out


# ---------------------------------------------------------------------------
# exactness oracle
# ---------------------------------------------------------------------------

MAX_ORACLE_PATTERNS = 1 << 16


@dataclass(frozen=True)
class OracleReport:
    passed: bool
    value: float
    truth: float
    b: np.ndarray
    noisy_residual: float
    telescoping_ok: bool | None
    telescoping_error: float | None


def layer_end_noise(c: Circuit) -> list[PauliNoiseChannel]:
    """Per-layer noise moved to the layer's end.

    Factors after a layer's rotation are conjugated forward through the rest
    of the layer.  Factors before it are conjugated backward to the previous
    layer's end, which is valid because Pauli channels commute with the
    Pauli insertion placed there.
    """
    n = c.n_qubits
    starts = [0] + [e + 1 for e in c.layer_ends[:-1]]
    out: list[list] = [[] for _ in c.layer_ends]
    for l, (s, e) in enumerate(zip(starts, c.layer_ends)):
        rot = next(i for i in range(s, e + 1) if isinstance(c.gates[i], PauliRotation))
        for i in range(s, e + 1):
            ch = c.slot(i)
            if ch is None:
                continue
            arr = PauliArray.from_strings([p for p, _ in ch.factors], n)
            if i >= rot:
                for g in c.gates[i + 1 : e + 1]:
                    conjugate_clifford(arr, g, heisenberg=False)
                dest = l
            else:
                if l == 0:
                    raise ValueError("noise ahead of the first rotation cannot be moved to a layer end")
                for g in reversed(c.gates[s : i + 1]):
                    conjugate_clifford(arr, g, heisenberg=True)
                dest = l - 1
            out[dest].extend((p.hermitian(), w) for p, (_, w) in zip(arr.to_strings(), ch.factors))
    return [PauliNoiseChannel(tuple(f)) for f in out]


def _pattern_weights(channels: Sequence[PauliNoiseChannel], patterns: Sequence[InsertionPattern], n: int) -> np.ndarray:
    mix = [{p.key: coef for p, coef in invert_channel(ch, n).terms} for ch in channels]
    return np.array([math.prod(m.get(p.key, 0.0) for m, p in zip(mix, pat.paulis)) for pat in patterns])


def theorem1_oracle(
    target: NoisyTarget,
    insertions: bool = True,
    configs: np.ndarray | None = None,
    tol: float = 1e-8,
) -> OracleReport:
    """Fit on exact noisy data and test the noiseless relation.

    With ``insertions`` every pattern of the ``4**(nL)`` space is used;
    otherwise only the all-identity pattern.  ``configs`` defaults to all
    ``4**L`` configurations.  The telescoping check expands each layer's
    inverse noise as a signed Pauli mixture and verifies that the weighted
    sum over patterns of exact noisy data reproduces the noiseless values of
    both the target and every configuration.
    """
    n, L = target.n_qubits, target.n_layers
    space = pattern_space_size(L, n)
    if insertions and space > MAX_ORACLE_PATTERNS:
        raise ValueError(f"{space} insertion patterns exceed the oracle limit")
    if configs is None:
        configs = np.array(list(itertools.product(range(4), repeat=L)), dtype=np.uint8)
    configs = np.atleast_2d(np.asarray(configs, dtype=np.uint8))
    template = target.noisy_circuit()
    channels = layer_end_noise(template)  # raises early if noise cannot be moved
    patterns = all_patterns(L, n) if insertions else [InsertionPattern.identity(n, L)]
    sample = ConfigSample(configs, _noiseless_values(template.with_noise(None), target.observable, configs, target.initial))
    problem = collect_data(target, sample, patterns, device=None)
    coeffs = fit_coefficients(problem)
    truth = target.noiseless_value()
    est = reconstruct(coeffs, sample, truth)

    tele_ok, tele_err = None, None
    if insertions:
        w = _pattern_weights(channels, patterns, n)
        errs = [abs(w @ problem.rhs - truth)] + list(np.abs(w @ problem.design - sample.noiseless))
        tele_err = float(max(errs))
        tele_ok = tele_err <= tol
    return OracleReport(
        passed=bool(est.eps_abs <= tol),
        value=est.value,
        truth=truth,
        b=coeffs.b,
        noisy_residual=coeffs.residual_norm,
        telescoping_ok=tele_ok,
        telescoping_error=tele_err,
    )
