"""Experiment runners behind the CLI subcommands.

Each runner takes a resolved ``ExperimentManifest`` and returns an
``ExperimentOutput``: raw per-repeat tables, aggregate tables, a JSON-able
summary and optional SVG figures.  Repeats fan out over a process pool and
come back in submission order, so results do not depend on ``threads``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .. import dense
from ..circuit import Circuit, ParamCircuit, build_structured_family, build_trotter_ising, compile_native
from ..ndecs import NoisyTarget, grid_estimates
from ..noise import HardwareNoiseProfile
from ..pauli import PauliObservable, PauliString
from ..quasiprob import l1_prefactor, log10_l1_prefactor, spmc_estimate
from ..seeding import derive_seed
from ..spd import TruncationPolicy, spd_run
from ..stabilizer import expectation
from . import svg
from .checks import CheckResult, run_checks
from .manifest import ExperimentManifest
from .results import NDECS_COLUMNS, ResultTable


@dataclass
class ExperimentOutput:
    tables: dict[str, ResultTable] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    figures: dict[str, str] = field(default_factory=dict)
    passed: bool = True


def fan_out(fn: Callable, tasks: Sequence, threads: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally on a process pool."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


# -- manifest -> objects ----------------------------------------------------


def build_circuit(spec: dict) -> tuple[ParamCircuit, PauliObservable, int]:
    """Parametrised circuit, observable and initial basis state."""
    family = spec.get("family", "trotter")
    if family == "trotter":
        pc = build_trotter_ising(
            int(spec["n"]), int(spec["N"]), spec.get("J", 1.0), spec.get("h", -1.0), float(spec.get("T", 1.0)),
            bool(spec.get("merge_half_steps", False)),
        )
        if spec.get("compile", False):
            pc = compile_native(pc)
        return pc, PauliObservable.magnetization(pc.n_qubits), 0
    if family == "structured":
        pc = build_structured_family(int(spec["D"]), float(spec["theta"]), float(spec["phi"]))
        return pc, PauliObservable.from_paulis([(PauliString.from_sparse(pc.n_qubits, {0: "Z"}), 1.0)], pc.n_qubits), 0
    raise ValueError(f"unknown circuit family {family!r}")


def build_target(m: ExperimentManifest, circuit: dict | None = None) -> NoisyTarget:
    pc, o, init = build_circuit(circuit or m.circuit)
    noise = dict(m.noise)
    axis_gamma = noise.pop("axis_gamma", None)
    profile = HardwareNoiseProfile.from_mapping(noise)
    return NoisyTarget(pc, o, init, None if profile.is_zero() else profile, axis_gamma)


def device_config(spec: dict, seed: int = 0) -> dense.DeviceEmulatorConfig:
    shots = spec.get("shots", 2**14)
    if shots in (None, 0, "inf"):
        shots = None
    return dense.DeviceEmulatorConfig(
        n_shots=shots,
        n_trajectories=spec.get("trajectories", 2048),
        seed=seed,
        method=spec.get("method", "auto"),
        shot_mode=spec.get("shot_mode", "per-term"),
    )


def ground_truth(policy: str, pc: ParamCircuit, o: PauliObservable, initial: int = 0) -> float:
    """Noiseless reference value under an explicit truth policy."""
    c = pc.bind()
    if policy == "dense":
        return dense.statevector_expectation(c, o, initial)
    if policy == "untruncated-spd":
        return spd_run(c, o, initial).value
    if policy == "analytic-identity":
        # the circuit composes to the identity, so the value is the input-state value
        value = expectation(Circuit(c.n_qubits, ()), o, initial)
        if c.n_qubits <= 12 and abs(dense.statevector_expectation(c, o, initial) - value) > 1e-9:
            raise ValueError("analytic-identity truth requested for a circuit that is not the identity")
        return value
    raise ValueError(f"unknown truth policy {policy!r}")


def _size_label(spec: dict) -> int:
    return int(spec["N"]) if spec.get("family", "trotter") == "trotter" else int(spec["D"])


# -- NDE-CS grid ------------------------------------------------------------


def _ndecs_repeat(task) -> list[dict]:
    manifest, circuit, cells, truth, repeat, seed = task
    target = build_target(manifest, circuit)
    t0 = time.perf_counter()
    res = grid_estimates(target, cells, device_config(manifest.device, seed), seed, truth, manifest.options.get("constraint_mode", "none"))
    wall = time.perf_counter() - t0
    rows = []
    for cell in res:
        e = cell.estimate
        rows.append(
            dict(
                seed=seed, repeat=repeat, M_C=cell.M_C, M_P=cell.M_P, n=target.n_qubits, N_or_D=_size_label(circuit),
                value=e.value, truth=e.truth, eps_abs=e.eps_abs, eps_rel=e.eps_rel, device_calls=cell.device_calls,
                retained_configs=cell.retained_configs, wall_seconds=wall,
            )
        )
    return rows


def _grid_cells(grid: dict) -> list[tuple[int, int]]:
    if "cells" in grid and grid["cells"]:
        return [(int(a), int(b)) for a, b in grid["cells"]]
    return [(int(a), int(b)) for a in grid["M_C"] for b in grid["M_P"]]


def _aggregate(rows: list[dict], keys: Sequence[str]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, rs in groups.items():
        rel = np.array([r["eps_rel"] for r in rs], dtype=float)
        ab = np.array([r["eps_abs"] for r in rs], dtype=float)
        out.append(
            {
                **dict(zip(keys, key)),
                "repeats": len(rs),
                "mean_eps_abs": float(ab.mean()),
                "mean_eps_rel": float(rel.mean()),
                "se_eps_rel": float(rel.std(ddof=1) / math.sqrt(len(rel))) if len(rel) > 1 else float("nan"),
            }
        )
        if "device_calls" in rs[0]:
            out[-1]["mean_device_calls"] = float(np.mean([r["device_calls"] for r in rs]))
    return out


def diagonal_trend(m_c: Sequence[int], m_p: Sequence[int], agg: list[dict]) -> list[dict]:
    """Cells ``(M_C[i], M_P[i])`` in order with their mean errors."""
    by_cell = {(a["M_C"], a["M_P"]): a for a in agg}
    return [by_cell[(int(a), int(b))] for a, b in zip(m_c, m_p) if (int(a), int(b)) in by_cell]


def nonincreasing_within_noise(means: Sequence[float], ses: Sequence[float], z: float = 2.0) -> bool:
    """Each step may rise by at most ``z`` combined standard errors."""
    return all(b <= a + z * math.hypot(sa, sb) for a, b, sa, sb in zip(means, means[1:], ses, ses[1:]))


def run_ndecs_grid(m: ExperimentManifest, threads: int = 1) -> ExperimentOutput:
    target = build_target(m)
    truth = ground_truth(m.truth, target.circuit, target.observable, target.initial)
    cells = _grid_cells(m.grid)
    tasks = [(m, m.circuit, cells, truth, r, derive_seed(m.seed, r)) for r in range(m.repeats)]
    rows = [row for rs in fan_out(_ndecs_repeat, tasks, threads) for row in rs]
    raw = ResultTable("ndecs_grid_raw", NDECS_COLUMNS + ("repeat", "retained_configs"), m.hash, m.seed)
    raw.extend(rows)
    agg = _aggregate(rows, ("M_C", "M_P"))
    summ = ResultTable("ndecs_grid_summary", ("M_C", "M_P", "repeats", "mean_eps_abs", "mean_eps_rel", "se_eps_rel", "mean_device_calls"), m.hash, m.seed)
    summ.extend(agg)
    diag = diagonal_trend(m.grid.get("M_C", []), m.grid.get("M_P", []), agg)
    means = [d["mean_eps_rel"] for d in diag]
    ses = [d["se_eps_rel"] for d in diag]
    summary = {
        "truth": truth,
        "n": target.n_qubits,
        "cells": len(cells),
        "diagonal": [{"M_C": d["M_C"], "M_P": d["M_P"], "mean_eps_rel": d["mean_eps_rel"], "se_eps_rel": d["se_eps_rel"]} for d in diag],
        "diagonal_nonincreasing": nonincreasing_within_noise(means, ses) if len(diag) > 1 else None,
        "best_cell": min(agg, key=lambda a: a["mean_eps_rel"]),
    }
    out = ExperimentOutput({"raw": raw, "summary": summ}, summary)
    mcs = sorted({c for c, _ in cells})
    mps = sorted({p for _, p in cells})
    grid = np.full((len(mcs), len(mps)), np.nan)
    for a in agg:
        grid[mcs.index(a["M_C"]), mps.index(a["M_P"])] = a["mean_eps_rel"]
    out.figures["ndecs_grid"] = svg.heatmap(grid, mcs, mps, "mean relative error", "M_P", "M_C")
    return out


# -- SMC convergence --------------------------------------------------------


def _smc_repeat(task) -> dict:
    pc, o, init, truth, M, repeat, seed, n, N = task
    t0 = time.perf_counter()
    r = spmc_estimate(pc, o, init, M, seed)
    wall = time.perf_counter() - t0
    eps_abs = abs(r.value - truth)
    return dict(
        seed=seed, repeat=repeat, M=M, n=n, N_or_D=N, value=r.value, truth=truth, eps_abs=eps_abs,
        eps_rel=eps_abs / abs(truth) if truth else float("nan"), std_error=r.std_error, wall_seconds=wall,
    )


def loglog_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Slope and intercept of ``log10 y = a log10 x + b``."""
    a, b = np.polyfit(np.log10(np.asarray(x, float)), np.log10(np.asarray(y, float)), 1)
    return float(a), float(b)


def smc_prefactors(n: int, N: int, J=1.0, h=-1.0, T: float = 1.0) -> dict:
    """``prod_l l1_l**2`` (as log10) for the half-step layout and the merged one."""
    out = {}
    for merged in (False, True):
        pc = build_trotter_ising(n, N, J, h, T, merge_half_steps=merged)
        out["merged" if merged else "unmerged"] = 2 * log10_l1_prefactor(pc.angles)
    return out


def run_smc_convergence(m: ExperimentManifest, threads: int = 1) -> ExperimentOutput:
    pc, o, init = build_circuit(m.circuit)
    truth = ground_truth(m.truth, pc, o, init)
    n, N = pc.n_qubits, _size_label(m.circuit)
    Ms = [int(v) for v in m.grid["M"]]
    tasks = [(pc, o, init, truth, M, r, derive_seed(m.seed, i, r), n, N) for i, M in enumerate(Ms) for r in range(m.repeats)]
    rows = fan_out(_smc_repeat, tasks, threads)
    raw = ResultTable("smc_raw", ("seed", "repeat", "M", "n", "N_or_D", "value", "truth", "eps_abs", "eps_rel", "std_error", "wall_seconds"), m.hash, m.seed)
    raw.extend(rows)
    agg = _aggregate(rows, ("M",))
    summ = ResultTable("smc_summary", ("M", "repeats", "mean_eps_abs", "mean_eps_rel", "se_eps_rel"), m.hash, m.seed)
    summ.extend({k: a[k] for k in summ.columns if k in a} for a in agg)
    means = np.array([a["mean_eps_rel"] for a in agg])
    pref = l1_prefactor(pc.angles) ** 2
    target_eps = float(m.options.get("target_eps", 1e-2))
    summary = {"truth": truth, "n": n, "N": N, "prefactor": pref, "target_eps": target_eps}
    if np.all(means > 0) and len(Ms) > 1:
        slope, icpt = loglog_fit(Ms, means)
        summary.update(slope=slope, intercept=icpt, extrapolated_M=10 ** ((math.log10(target_eps) - icpt) / slope))
    else:
        summary.update(slope=None, intercept=None, extrapolated_M=None)
    summary["closed_form_M"] = pref / target_eps**2
    en, eN = int(m.options.get("extrapolate_n", 16)), int(m.options.get("extrapolate_N", 5))
    logs = smc_prefactors(en, eN, m.circuit.get("J", 1.0), m.circuit.get("h", -1.0), float(m.circuit.get("T", 1.0)))
    summary["extrapolation"] = {
        "n": en,
        "N": eN,
        "log10_prefactor": logs,
        "log10_closed_form_M": {k: v - 2 * math.log10(target_eps) for k, v in logs.items()},
    }
    out = ExperimentOutput({"raw": raw, "summary": summ}, summary)
    series = {"mean eps_rel": (Ms, list(means))}
    if summary["slope"] is not None:
        series["fit"] = (Ms, [10 ** (summary["intercept"] + summary["slope"] * math.log10(x)) for x in Ms])
    out.figures["smc_convergence"] = svg.line_plot(series, "SMC convergence", "M", "eps_rel", logx=True, logy=True)
    return out


# -- NDE-CS vs SMC cost -----------------------------------------------------


def run_scaling_compare(m: ExperimentManifest, threads: int = 1) -> ExperimentOutput:
    target_eps = float(m.options.get("target_eps", 0.05))
    cells = [(int(a), int(b)) for a in m.grid["M_C"] for b in m.grid["M_P"]]
    shots = device_config(m.device).n_shots
    raw = ResultTable("scaling_raw", NDECS_COLUMNS + ("repeat", "retained_configs"), m.hash, m.seed)
    summ = ResultTable(
        "scaling_summary",
        ("n", "N_or_D", "target_eps", "reached", "ndecs_M_C", "ndecs_M_P", "ndecs_device_calls", "ndecs_shots", "ndecs_mean_eps_rel", "smc_closed_form", "log10_smc_closed_form"),
        m.hash,
        m.seed,
    )
    points = []
    for i, n in enumerate(m.grid["n"]):
        for j, N in enumerate(m.grid["N"]):
            circ = {**m.circuit, "n": int(n), "N": int(N)}
            target = build_target(m, circ)
            truth = ground_truth(m.truth, target.circuit, target.observable, target.initial)
            tasks = [(m, circ, cells, truth, r, derive_seed(m.seed, i, j, r)) for r in range(m.repeats)]
            rows = [row for rs in fan_out(_ndecs_repeat, tasks, threads) for row in rs]
            raw.extend(rows)
            agg = sorted(_aggregate(rows, ("M_C", "M_P")), key=lambda a: (a["mean_device_calls"], a["M_C"], a["M_P"]))
            hit = next((a for a in agg if a["mean_eps_rel"] <= target_eps), None)
            log_smc = 2 * log10_l1_prefactor(target.circuit.angles) - 2 * math.log10(target_eps)
            row = dict(
                n=int(n), N_or_D=int(N), target_eps=target_eps, reached=hit is not None, smc_closed_form=10**log_smc,
                log10_smc_closed_form=log_smc,
            )
            if hit is not None:
                row.update(
                    ndecs_M_C=hit["M_C"], ndecs_M_P=hit["M_P"], ndecs_device_calls=hit["mean_device_calls"],
                    ndecs_shots=None if shots is None else hit["mean_device_calls"] * shots, ndecs_mean_eps_rel=hit["mean_eps_rel"],
                )
            summ.append(row)
            points.append(row)
    out = ExperimentOutput({"raw": raw, "summary": summ}, {"target_eps": target_eps, "points": points, "unreached": sum(not p["reached"] for p in points)})
    series = {}
    for n in m.grid["n"]:
        pts = [p for p in points if p["n"] == int(n)]
        series[f"SMC n={n}"] = ([p["N_or_D"] for p in pts], [p["smc_closed_form"] for p in pts])
        hit = [p for p in pts if p["reached"]]
        series[f"NDE-CS n={n}"] = ([p["N_or_D"] for p in hit], [p["ndecs_device_calls"] for p in hit])
    out.figures["scaling_compare"] = svg.line_plot(series, f"cost to eps_rel={target_eps}", "Trotter steps N", "count", logy=True)
    return out


# -- SPD path budgets -------------------------------------------------------


@dataclass
class _SpdProbe:
    """Cached truncated SPD evaluations for one circuit."""

    circuit: Circuit
    observable: PauliObservable
    truth: float
    cache: dict = field(default_factory=dict)

    def eps(self, m_max: int) -> float:
        if m_max not in self.cache:
            t0 = time.perf_counter()
            res = spd_run(self.circuit, self.observable, 0, TruncationPolicy(m_max))
            self.cache[m_max] = (res, time.perf_counter() - t0)
        res = self.cache[m_max][0]
        return abs(res.value - self.truth) / abs(self.truth)

    def smallest_within(self, tol: float, hi: int, listed: Sequence[int] | None = None) -> int | None:
        """Smallest budget with ``eps <= tol``: scan ``listed`` if given,
        otherwise bisect ``[1, hi]`` assuming the error shrinks with budget."""
        if listed:
            return next((mm for mm in sorted(listed) if self.eps(mm) <= tol), None)
        if self.eps(hi) > tol:
            return None
        lo = 0  # eps(lo) > tol, with budget 0 standing for "no paths"
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.eps(mid) <= tol:
                hi = mid
            else:
                lo = mid
        return hi


EXACT_TOL = 1e-12


def run_spd_scaling(m: ExperimentManifest, threads: int = 1) -> ExperimentOutput:
    thresholds = [float(t) for t in m.grid["thresholds"]]
    listed = [int(v) for v in m.grid.get("m_max", [])]
    runs = ResultTable("spd_runs", ("D", "n", "m_max", "value", "truth", "eps_abs", "eps_rel", "max_paths", "wall_seconds"), m.hash, m.seed)
    thr = ResultTable("spd_thresholds", ("D", "n", "threshold", "m_max_needed", "untruncated_paths"), m.hash, m.seed)
    per_d = []
    for D in m.grid["D"]:
        circ = {**m.circuit, "family": "structured", "D": int(D)}
        pc, o, _ = build_circuit(circ)
        truth = ground_truth(m.truth, pc, o)
        c = pc.bind()
        full = spd_run(c, o)
        probe = _SpdProbe(c, o, truth)
        hi = max(full.max_paths, 1)
        exact_m = probe.smallest_within(EXACT_TOL, hi)
        for t in thresholds:
            need = probe.smallest_within(t, hi, listed)
            thr.append(dict(D=int(D), n=pc.n_qubits, threshold=t, m_max_needed=need, untruncated_paths=full.max_paths))
        for mm in sorted(probe.cache):
            res, wall = probe.cache[mm]
            eps_abs = abs(res.value - truth)
            runs.append(dict(D=int(D), n=pc.n_qubits, m_max=mm, value=res.value, truth=truth, eps_abs=eps_abs, eps_rel=eps_abs / abs(truth), max_paths=res.max_paths, wall_seconds=wall))
        per_d.append({"D": int(D), "n": pc.n_qubits, "truth": truth, "untruncated_paths": full.max_paths, "exact_m_max": exact_m})
    fit_t = float(m.options.get("fit_threshold", 0.1))
    pts = [(r["n"], r["m_max_needed"]) for r in thr.rows if r["threshold"] == fit_t and r["m_max_needed"]]
    summary: dict = {"per_D": per_d, "fit_threshold": fit_t}
    if len(pts) >= 2:
        ns, ms = zip(*pts)
        slope, icpt = np.polyfit(ns, np.log(ms), 1)
        summary.update(log_fit_slope=float(slope), log_fit_intercept=float(icpt))
    else:
        summary.update(log_fit_slope=None, log_fit_intercept=None)
    out = ExperimentOutput({"runs": runs, "thresholds": thr}, summary)
    series = {}
    for t in thresholds:
        rs = [r for r in thr.rows if r["threshold"] == t and r["m_max_needed"]]
        series[f"eps {t:g}"] = ([r["n"] for r in rs], [r["m_max_needed"] for r in rs])
    out.figures["spd_scaling"] = svg.line_plot(series, "paths needed", "qubits n", "m_max", logy=True)
    return out


# -- verify -----------------------------------------------------------------


def run_verify(m: ExperimentManifest | None = None, threads: int = 1) -> ExperimentOutput:
    results: list[CheckResult] = run_checks()
    m = m or ExperimentManifest.default("verify")
    table = ResultTable("verify", ("check", "passed", "worst", "tolerance", "seconds", "detail"), m.hash, m.seed)
    for r in results:
        table.append(dict(check=r.name, passed=r.passed, worst=r.worst, tolerance=r.tolerance, seconds=r.seconds, detail=repr(r.detail)))
    summary = {"checks": [{"name": r.name, "passed": r.passed, "worst": r.worst, "tolerance": r.tolerance} for r in results]}
    failed = [r.name for r in results if not r.passed]
    summary["failed"] = failed
    return ExperimentOutput({"verify": table}, summary, passed=not failed)


RUNNERS: dict[str, Callable[[ExperimentManifest, int], ExperimentOutput]] = {
    "ndecs-grid": run_ndecs_grid,
    "smc-convergence": run_smc_convergence,
    "scaling-compare": run_scaling_compare,
    "spd-scaling": run_spd_scaling,
    "verify": run_verify,
}


def run_experiment(m: ExperimentManifest, threads: int = 1) -> ExperimentOutput:
    return RUNNERS[m.kind](m, threads)
