"""Clifford decompositions of Pauli rotations and quasiprobability sampling.

A rotation channel ``R_P(theta)`` is written as ``sum_k a_k R_P(k pi/2)``.
Sampling ``k`` per layer with probability ``|a_k| / l1`` and weighting each
Clifford circuit by the sign product times ``prod_l l1_l`` gives an unbiased
estimator whose variance scales with ``prod_l l1_l**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .circuit import Circuit, ParamCircuit, PauliRotation, clifford_index
from .noise import PauliNoiseChannel
from .pauli import PauliObservable
from .stabilizer import batch_term_values, observable_coefficients

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class GateDecomposition:
    """Coefficients ``a_k`` of ``R_P(k pi/2)``, ``k = 0..3``."""

    coefficients: tuple[float, float, float, float]
    l1: float

    @classmethod
    def from_coefficients(cls, a: Sequence[float]) -> "GateDecomposition":
        a = tuple(float(v) for v in a)
        if len(a) != 4:
            raise ValueError("need four coefficients")
        return cls(a, float(sum(abs(v) for v in a)))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coefficients)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.array) / self.l1

    @property
    def signs(self) -> np.ndarray:
        return np.where(self.array < 0, -1.0, 1.0)


@dataclass(frozen=True)
class EstimatorResult:
    value: float
    std_error: float
    n_samples: int
    l1_prefactor: float
    sample_variance: float = float("nan")
    mean_square_clifford: float = float("nan")

    @property
    def variance_prefactor(self) -> float:
        """Empirical per-sample variance divided by the mean squared Clifford
        value; tracks ``l1_prefactor**2`` when the estimator variance is
        dominated by sign cancellations."""
        return self.sample_variance / self.mean_square_clifford


def bennink_decomposition(theta: float) -> GateDecomposition:
    """Three-term mixture over identity (k=0), S (k=1) and the Pauli (k=2):
    ``((1 + cos - sin)/2, sin, (1 - cos - sin)/2, 0)``."""
    c, s = math.cos(theta), math.sin(theta)
    return GateDecomposition.from_coefficients(((1 + c - s) / 2, s, (1 - c - s) / 2, 0.0))


_EXACT_COS_SIN = {0: (1.0, 0.0), 1: (0.0, 1.0), 2: (-1.0, 0.0), 3: (0.0, -1.0)}


def _cos_sin(theta: float) -> tuple[float, float]:
    k = clifford_index(theta)
    return _EXACT_COS_SIN[k] if k is not None else (math.cos(theta), math.sin(theta))


def _noisy_coefficients(theta: float, scale: float) -> tuple[float, float, float, float]:
    c, s = _cos_sin(theta)
    norm = abs(s) + abs(c)
    a0 = abs(c) / (2 * norm) + scale * c / 2
    a2 = abs(c) / (2 * norm) - scale * c / 2
    a1 = abs(s) / (2 * norm) + scale * s / 2
    a3 = abs(s) / (2 * norm) - scale * s / 2
    return a0, a1, a2, a3


def _quantize(theta: float) -> float:
    return round(theta % TWO_PI, 15)


@lru_cache(maxsize=4096)
def _cached(theta_q: float, gamma: float) -> GateDecomposition:
    a = _noisy_coefficients(theta_q, 1.0 - 2.0 * gamma)
    return GateDecomposition.from_coefficients(a)


def optimal_decomposition(theta: float) -> GateDecomposition:
    """Minimal-l1 four-term decomposition; ``l1 = |sin| + |cos|``."""
    return _cached(_quantize(theta), 0.0)


def noisy_decomposition(theta: float, gamma: float) -> GateDecomposition:
    """Decomposition of ``E_P o R_P(theta)`` for axis dephasing ``gamma``;
    ``l1 = max(1, (1 - 2 gamma)(|sin| + |cos|))``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    return _cached(_quantize(theta), float(gamma))


def critical_noise(theta: float) -> float:
    """Axis dephasing rate above which the noisy rotation is a convex
    mixture of Clifford rotations."""
    g = 0.5 * (1.0 - 1.0 / (abs(math.sin(theta)) + abs(math.cos(theta))))
    return min(max(g, 0.0), math.nextafter(0.5, 0.0))


def l1_prefactor(angles: Sequence[float], gammas: Sequence[float] | float = 0.0) -> float:
    """``prod_l l1_l`` of the per-layer decompositions."""
    gs = np.broadcast_to(np.asarray(gammas, dtype=float), (len(angles),))
    return float(np.prod([noisy_decomposition(t, g).l1 for t, g in zip(angles, gs)]))


def log10_l1_prefactor(angles: Sequence[float], gammas: Sequence[float] | float = 0.0) -> float:
    gs = np.broadcast_to(np.asarray(gammas, dtype=float), (len(angles),))
    return float(sum(math.log10(noisy_decomposition(t, g).l1) for t, g in zip(angles, gs)))


def single_qubit_robustness(bloch: Sequence[float]) -> float:
    """Robustness of magic of a single-qubit state, ``max(1, |x|+|y|+|z|)``."""
    x, y, z = (float(v) for v in bloch)
    if x * x + y * y + z * z > 1 + 1e-12:
        raise ValueError("Bloch vector outside the unit ball")
    return max(1.0, abs(x) + abs(y) + abs(z))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def index_rotations(c: Circuit) -> Circuit:
    """Renumber rotation gates by order of appearance (their layer index)."""
    gates, l = [], 0
    for g in c.gates:
        if isinstance(g, PauliRotation):
            g = replace(g, layer=l)
            l += 1
        gates.append(g)
    ends = c.layer_ends if len(c.layer_ends) == l else tuple(i for i, g in enumerate(gates) if isinstance(g, PauliRotation))
    return replace(c, gates=tuple(gates), layer_ends=ends)


def sample_layer_indices(decomps: Sequence[GateDecomposition], M: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``M`` configurations; returns ``(k (M, L) uint8, sign (M,))``."""
    probs = np.array([d.probabilities for d in decomps])
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random((M, len(decomps)))
    k = (u[:, :, None] >= cdf[None, :, :3]).sum(axis=2).astype(np.uint8)
    sgn = np.array([d.signs for d in decomps])
    signs = np.prod(sgn[np.arange(len(decomps))[None, :], k], axis=1)
    return k, signs


def _clifford_values(template: Circuit, o: PauliObservable, k: np.ndarray, initial: int) -> np.ndarray:
    uniq, inv = np.unique(k, axis=0, return_inverse=True)
    coefs = observable_coefficients(o)
    vals = batch_term_values(template, o, uniq, initial=initial)[0] @ coefs
    return vals[inv.ravel()]


def _run_sampler(template, o, decomps, initial, M, seed, chunk) -> EstimatorResult:
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pref = float(np.prod([d.l1 for d in decomps]))
    total = 0.0
    total_sq = 0.0
    f_sq = 0.0
    done = 0
    while done < M:
        m = min(chunk, M - done)
        k, signs = sample_layer_indices(decomps, m, rng)
        f = _clifford_values(template, o, k, initial)
        x = signs * f
        total += x.sum()
        total_sq += (x * x).sum()
        f_sq += (f * f).sum()
        done += m
    mean = total / M
    var = (total_sq - M * mean * mean) / (M - 1) if M > 1 else 0.0
    var = max(var, 0.0)
    return EstimatorResult(
        value=float(pref * mean),
        std_error=pref * math.sqrt(var / M),
        n_samples=M,
        l1_prefactor=pref,
        sample_variance=float(pref * pref * var),
        mean_square_clifford=float(f_sq / M),
    )


def spmc_estimate(
    c: ParamCircuit | Circuit,
    o: PauliObservable,
    initial: int = 0,
    M: int = 1000,
    seed: int = 0,
    chunk: int = 1 << 15,
) -> EstimatorResult:
    """Noiseless structure-preserving Monte Carlo estimate of ``<O>``.

    Each sample draws one Clifford configuration from the per-layer
    minimal-l1 decompositions; the same code path is the multi-layer
    sign-weighted Monte Carlo estimator for this decomposition family.
    """
    circ = index_rotations((c.bind() if isinstance(c, ParamCircuit) else c).with_noise(None))
    decomps = [optimal_decomposition(g.angle) for g in circ.gates if isinstance(g, PauliRotation)]
    return _run_sampler(circ, o, decomps, initial, M, seed, chunk)


smc_estimate = spmc_estimate


def split_axis_noise(c: Circuit) -> tuple[Circuit, list[float]]:
    """Fold axis-aligned factors of each rotation's noise slot into one
    effective dephasing rate; other factors stay in the circuit and are
    handled exactly by the Clifford evaluator."""
    c = index_rotations(c)
    slots = list(c.noise) if c.noise is not None else [None] * len(c.gates)
    gammas = []
    for i, g in enumerate(c.gates):
        if not isinstance(g, PauliRotation):
            continue
        ch = slots[i]
        damp = 1.0
        rest = []
        for p, w in ch.factors if ch is not None else ():
            if p.key == g.axis.key:
                damp *= 2 * w - 1
            else:
                rest.append((p, w))
        gammas.append((1.0 - damp) / 2.0)
        slots[i] = PauliNoiseChannel(tuple(rest)) if rest else None
    return c.with_noise(slots), gammas


def noisy_spmc_estimate(
    c: Circuit,
    o: PauliObservable,
    initial: int = 0,
    M: int = 1000,
    seed: int = 0,
    chunk: int = 1 << 15,
) -> EstimatorResult:
    """Monte Carlo estimate of the noisy expectation of a circuit with Pauli
    noise, using the noisy per-layer decompositions for axis dephasing."""
    template, gammas = split_axis_noise(c)
    rots = [g for g in template.gates if isinstance(g, PauliRotation)]
    decomps = [noisy_decomposition(g.angle, gm) for g, gm in zip(rots, gammas)]
    return _run_sampler(template, o, decomps, initial, M, seed, chunk)
