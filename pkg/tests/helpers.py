"""Random circuit generators shared by the test modules."""

from ndesim.random_circuits import (  # noqa: F401
    random_clifford_circuit,
    random_nonidentity_pauli,
    random_observable,
    random_pauli,
    random_rotation_circuit,
)
