"""Experiment manifests: TOML files resolved against per-kind defaults.

A manifest has the sections ``[circuit]``, ``[noise]``, ``[device]`` and
``[grid]`` plus top-level ``kind``, ``repeats``, ``seed`` and ``truth``.
Missing keys take the defaults of the experiment kind.  The manifest hash
covers the resolved content except the root seed, which every result row
carries separately.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("ndecs-grid", "smc-convergence", "scaling-compare", "spd-scaling", "verify")
TRUTH_POLICIES = ("dense", "analytic-identity", "untruncated-spd")
SECTIONS = ("circuit", "noise", "device", "grid", "options")

_TROTTER = {"family": "trotter", "n": 8, "N": 3, "J": 1.0, "h": -1.0, "T": 1.0, "compile": True, "merge_half_steps": False}
_PROFILE = {"gamma_zz": 1e-3, "gamma_x": 2e-3, "gamma_y": 2e-3, "gamma_z": 2e-3}
_DEVICE = {"shots": 2**14, "trajectories": 2048, "method": "auto", "shot_mode": "per-term"}

DEFAULTS: dict[str, dict[str, Any]] = {
    "ndecs-grid": {
        "circuit": dict(_TROTTER),
        "noise": dict(_PROFILE),
        "device": dict(_DEVICE),
        "grid": {"M_C": [25, 50, 100, 200, 400], "M_P": [5, 10, 20, 40, 80]},
        "options": {"constraint_mode": "none"},
        "repeats": 20,
        "truth": "dense",
    },
    "smc-convergence": {
        "circuit": dict(_TROTTER, n=6, N=2, compile=False),
        "noise": {},
        "device": {},
        "grid": {"M": [100, 316, 1000, 3162, 10000, 31623, 100000]},
        "options": {"target_eps": 1e-2, "extrapolate_n": 16, "extrapolate_N": 5},
        "repeats": 20,
        "truth": "dense",
    },
    "scaling-compare": {
        "circuit": dict(_TROTTER),
        "noise": dict(_PROFILE),
        "device": dict(_DEVICE),
        "grid": {
            "n": [6, 8],
            "N": [1, 2, 3],
            "M_C": [5, 10, 25, 50, 100, 200],
            "M_P": [1, 2, 5, 10, 20, 40],
        },
        "options": {"target_eps": 0.05, "constraint_mode": "none"},
        "repeats": 5,
        "truth": "dense",
    },
    "spd-scaling": {
        "circuit": {"family": "structured", "D": 1, "theta": 0.0, "phi": 0.7853981633974483},
        "noise": {},
        "device": {},
        "grid": {"D": [1, 2, 3, 4, 5, 6, 7, 8], "m_max": [], "thresholds": [0.8, 0.6, 0.4, 0.1, 0.01]},
        "options": {"fit_threshold": 0.1},
        "repeats": 1,
        "truth": "analytic-identity",
    },
    "verify": {"circuit": {}, "noise": {}, "device": {}, "grid": {}, "options": {}, "repeats": 1, "truth": "dense"},
}

# grid keys that must be nonempty when present for a kind
_REQUIRED_GRIDS = {
    "ndecs-grid": ("M_C", "M_P"),
    "smc-convergence": ("M",),
    "scaling-compare": ("n", "N", "M_C", "M_P"),
    "spd-scaling": ("D", "thresholds"),
    "verify": (),
}


@dataclass(frozen=True)
class ExperimentManifest:
    kind: str
    circuit: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    device: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    repeats: int = 1
    seed: int = 0
    truth: str = "dense"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if int(self.repeats) < 1:
            raise ValueError("repeats must be >= 1")
        if self.truth not in TRUTH_POLICIES:
            raise ValueError(f"truth must be one of {TRUTH_POLICIES}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for key in _REQUIRED_GRIDS[self.kind]:
            if not list(self.grid.get(key, [])):
                raise ValueError(f"grid.{key} must be nonempty")

    @classmethod
    def from_dict(cls, data: dict, kind: str | None = None) -> "ExperimentManifest":
        data = dict(data)
        kind = data.pop("kind", kind)
        if kind is None:
            raise ValueError("manifest has no kind")
        if kind not in DEFAULTS:
            raise ValueError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
        resolved = copy.deepcopy(DEFAULTS[kind])
        for sec in SECTIONS:
            extra = data.pop(sec, {})
            if not isinstance(extra, dict):
                raise ValueError(f"[{sec}] must be a table")
            resolved[sec].update(extra)
        for key in ("repeats", "truth", "seed"):
            if key in data:
                resolved[key] = data.pop(key)
        if data:
            raise ValueError(f"unknown manifest keys: {sorted(data)}")
        return cls(kind=kind, **resolved)

    @classmethod
    def load(cls, path: str | Path, kind: str | None = None) -> "ExperimentManifest":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        if kind is not None and data.get("kind", kind) != kind:
            raise ValueError(f"manifest kind {data['kind']!r} does not match command {kind!r}")
        return cls.from_dict(data, kind)

    @classmethod
    def default(cls, kind: str) -> "ExperimentManifest":
        return cls.from_dict({}, kind)

    def with_seed(self, seed: int) -> "ExperimentManifest":
        return ExperimentManifest(**{**self.to_dict(), "seed": int(seed)})

    def with_overrides(self, **sections) -> "ExperimentManifest":
        d = self.to_dict()
        for sec, extra in sections.items():
            if sec in SECTIONS:
                d[sec] = {**d[sec], **extra}
            else:
                d[sec] = extra
        return ExperimentManifest(**d)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "circuit": dict(self.circuit),
            "noise": dict(self.noise),
            "device": dict(self.device),
            "grid": {k: list(v) if isinstance(v, (list, tuple)) else v for k, v in self.grid.items()},
            "options": dict(self.options),
            "repeats": int(self.repeats),
            "seed": int(self.seed),
            "truth": self.truth,
        }

    @property
    def hash(self) -> str:
        """sha256 of the canonical JSON of everything except the seed."""
        d = self.to_dict()
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
