"""Random circuits and observables for cross-checking the engines."""

import math

import numpy as np

from ndesim.circuit import Circuit, NamedClifford, PauliInsertion, PauliRotation
from ndesim.pauli import PauliObservable, PauliString

ONE_Q = ["H", "S", "X", "Y", "Z"]
TWO_Q = ["CZ", "CNOT", "CZ_X"]


def random_pauli(n, rng, hermitian=True):
    p = PauliString(n, int(rng.integers(0, 2**n)), int(rng.integers(0, 2**n)))
    return p.hermitian() if hermitian else p


def random_nonidentity_pauli(n, rng):
    while True:
        p = random_pauli(n, rng)
        if not p.is_identity():
            return p


def random_clifford_circuit(n, n_gates, rng, rotations=True):
    gates = []
    for _ in range(n_gates):
        r = rng.random()
        if n >= 2 and r < 0.35:
            a, b = rng.choice(n, 2, replace=False)
            gates.append(NamedClifford(TWO_Q[rng.integers(3)], (int(a), int(b))))
        elif rotations and r < 0.6:
            k = int(rng.integers(4))
            gates.append(PauliRotation(random_nonidentity_pauli(n, rng), k * math.pi / 2))
        elif r < 0.7:
            gates.append(PauliInsertion(random_pauli(n, rng)))
        else:
            gates.append(NamedClifford(ONE_Q[rng.integers(5)], (int(rng.integers(n)),)))
    return Circuit(n, tuple(gates))


def random_rotation_circuit(n, n_gates, rng, max_weight=3):
    gates = []
    for _ in range(n_gates):
        if rng.random() < 0.5:
            w = int(rng.integers(1, min(n, max_weight) + 1))
            sup = rng.choice(n, w, replace=False)
            letters = {int(q): "XYZ"[rng.integers(3)] for q in sup}
            gates.append(PauliRotation(PauliString.from_sparse(n, letters), float(rng.uniform(-math.pi, math.pi))))
        elif n >= 2 and rng.random() < 0.5:
            a, b = rng.choice(n, 2, replace=False)
            gates.append(NamedClifford(TWO_Q[rng.integers(3)], (int(a), int(b))))
        else:
            gates.append(NamedClifford(ONE_Q[rng.integers(5)], (int(rng.integers(n)),)))
    return Circuit(n, tuple(gates))


def random_observable(n, rng, n_terms=3):
    items = [(random_pauli(n, rng), float(rng.normal())) for _ in range(n_terms)]
    return PauliObservable.from_paulis(items, n)
