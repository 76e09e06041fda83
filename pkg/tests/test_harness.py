import json
import math

import numpy as np
import pytest

from ndesim.harness import svg
from ndesim.harness.cli import build_parser, main
from ndesim.harness.experiments import (
    build_circuit,
    ground_truth,
    loglog_fit,
    nonincreasing_within_noise,
    run_experiment,
    smc_prefactors,
)
from ndesim.harness.manifest import DEFAULTS, KINDS, ExperimentManifest
from ndesim.harness.results import ResultTable
from ndesim.quasiprob import optimal_decomposition
from ndesim.seeding import derive_seed, stream

SMALL_GRID = {"repeats": 2, "circuit": {"n": 4, "N": 1}, "grid": {"M_C": [5, 10], "M_P": [1, 2]}}


# -- manifests --------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_defaults_are_valid(kind):
    m = ExperimentManifest.default(kind)
    assert m.kind == kind and m.repeats >= 1


def test_manifest_validation():
    with pytest.raises(ValueError):
        ExperimentManifest.from_dict({"kind": "nope"})
    with pytest.raises(ValueError):
        ExperimentManifest.from_dict({"kind": "ndecs-grid", "repeats": 0})
    with pytest.raises(ValueError):
        ExperimentManifest.from_dict({"kind": "ndecs-grid", "grid": {"M_C": []}})
    with pytest.raises(ValueError):
        ExperimentManifest.from_dict({"kind": "ndecs-grid", "truth": "oracle"})
    with pytest.raises(ValueError):
        ExperimentManifest.from_dict({"kind": "ndecs-grid", "bogus": 1})
    with pytest.raises(ValueError):
        ExperimentManifest.from_dict({"kind": "ndecs-grid", "seed": -1})


def test_manifest_hash_ignores_seed_only():
    a = ExperimentManifest.default("ndecs-grid")
    assert a.with_seed(7).hash == a.hash
    assert a.with_overrides(repeats=3).hash != a.hash
    assert a.with_overrides(grid={"M_C": [1]}).grid["M_P"] == DEFAULTS["ndecs-grid"]["grid"]["M_P"]


def test_manifest_load_toml(tmp_path):
    p = tmp_path / "m.toml"
    p.write_text('kind = "smc-convergence"\nrepeats = 3\nseed = 9\n[grid]\nM = [10, 20]\n')
    m = ExperimentManifest.load(p)
    assert (m.repeats, m.seed, m.grid["M"]) == (3, 9, [10, 20])
    assert m.circuit["n"] == 6
    with pytest.raises(ValueError):
        ExperimentManifest.load(p, "ndecs-grid")


def test_shipped_manifests_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "manifests"
    files = sorted(root.glob("*.toml"))
    assert files
    for f in files:
        ExperimentManifest.load(f)


# -- seeds and tables -------------------------------------------------------


def test_seed_derivation_is_stable_and_distinct():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    seeds = {derive_seed(0, r) for r in range(100)} | {derive_seed(1, r) for r in range(100)}
    assert len(seeds) == 200
    assert stream(3, 1).random() == stream(3, 1).random()
    assert stream(3, 1).random() != stream(3, 2).random()


def test_result_table_roundtrip(tmp_path):
    t = ResultTable("demo", ("a", "b", "wall_seconds"), "abc", 5)
    t.append({"a": 1, "b": 0.1, "wall_seconds": 0.5})
    t.append({"a": 2, "b": None, "wall_seconds": 0.7})
    with pytest.raises(KeyError):
        t.append({"c": 1})
    back = ResultTable.read(t.write(tmp_path / "t.csv"))
    assert back.columns == ("a", "b", "wall_seconds", "manifest_hash", "root_seed")
    assert back.column("b") == ["0.1", ""]
    assert back.column("manifest_hash") == ["abc", "abc"]
    u = ResultTable("demo", ("a", "b", "wall_seconds"), "abc", 5)
    u.extend([{"a": 1, "b": 0.1, "wall_seconds": 9.0}, {"a": 2, "b": None, "wall_seconds": 1.0}])
    assert u.digest() == t.digest()
    assert u.to_csv() != t.to_csv()


def test_table_version_checked(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("# ndesim-table v99 name=x\na\n1\n")
    with pytest.raises(ValueError):
        ResultTable.read(p)


# -- helpers ----------------------------------------------------------------


def test_loglog_fit_recovers_power_law():
    x = np.array([1e2, 1e3, 1e4])
    slope, icpt = loglog_fit(x, 3.0 * x**-0.5)
    assert slope == pytest.approx(-0.5) and icpt == pytest.approx(math.log10(3.0))


@pytest.mark.parametrize(
    "means,ses,ok",
    [([3, 2, 1], [0.1] * 3, True), ([1, 1.1, 0.9], [0.1] * 3, True), ([1, 2, 0.5], [0.1] * 3, False)],
)
def test_nonincreasing_within_noise(means, ses, ok):
    assert nonincreasing_within_noise(means, ses) is ok


def test_smc_prefactor_matches_independent_recomputation():
    logs = smc_prefactors(4, 2)
    pc, _, _ = build_circuit({"family": "trotter", "n": 4, "N": 2})
    direct = sum(2 * math.log10(abs(math.sin(t)) + abs(math.cos(t))) for t in pc.angles)
    assert logs["unmerged"] == pytest.approx(direct, abs=1e-12)
    assert sum(2 * math.log10(optimal_decomposition(t).l1) for t in pc.angles) == pytest.approx(direct, abs=1e-12)
    assert logs["merged"] < logs["unmerged"]


def test_truth_policies_agree_on_identity_family():
    pc, o, init = build_circuit({"family": "structured", "D": 3, "theta": 0.0, "phi": math.pi / 4})
    vals = [ground_truth(p, pc, o, init) for p in ("dense", "analytic-identity", "untruncated-spd")]
    assert vals == pytest.approx([1.0, 1.0, 1.0], abs=1e-12)
    bent, o, init = build_circuit({"family": "structured", "D": 2, "theta": 0.3, "phi": math.pi / 4})
    with pytest.raises(ValueError):
        ground_truth("analytic-identity", bent, o, init)
    assert ground_truth("untruncated-spd", bent, o) == pytest.approx(ground_truth("dense", bent, o), abs=1e-12)


def test_svg_emitters():
    s = svg.line_plot({"a": ([1, 10, 100], [1.0, 0.3, 0.1])}, "t", "x", "y", logx=True, logy=True)
    assert s.startswith("<svg") and "polyline" in s
    h = svg.heatmap(np.array([[0.1, np.nan], [0.02, 0.5]]), [1, 2], ["a", "b"], "h")
    assert h.count("<rect") == 5
    assert "no data" in svg.line_plot({"a": ([], [])})


# -- experiments ------------------------------------------------------------


def test_ndecs_grid_is_reproducible_and_thread_independent():
    m = ExperimentManifest.from_dict({"kind": "ndecs-grid", **SMALL_GRID})
    a = run_experiment(m)
    b = run_experiment(m, threads=2)
    assert a.tables["raw"].digest() == b.tables["raw"].digest()
    assert len(a.tables["raw"]) == 2 * 4
    assert set(a.tables["raw"].column("manifest_hash")) == {m.hash}
    assert a.summary["diagonal"][0]["M_C"] == 5
    c = run_experiment(m.with_seed(1))
    assert c.tables["raw"].digest() != a.tables["raw"].digest()


def test_smc_all_clifford_has_zero_error():
    m = ExperimentManifest.from_dict(
        {"kind": "smc-convergence", "repeats": 2, "circuit": {"n": 3, "N": 2, "J": math.pi / 2, "h": math.pi}, "grid": {"M": [10, 100]}}
    )
    out = run_experiment(m)
    assert max(out.tables["raw"].column("eps_abs")) < 1e-12
    assert out.summary["prefactor"] == pytest.approx(1.0)


def test_scaling_compare_flags_unreachable_target():
    m = ExperimentManifest.from_dict(
        {"kind": "scaling-compare", "repeats": 1, "grid": {"n": [4], "N": [1], "M_C": [2], "M_P": [1]}, "options": {"target_eps": 1e-9}}
    )
    out = run_experiment(m)
    row = out.tables["summary"].rows[0]
    assert row["reached"] is False and row["ndecs_device_calls"] is None
    assert out.summary["unreached"] == 1


def test_scaling_compare_clifford_angles_are_trivial():
    m = ExperimentManifest.from_dict(
        {
            "kind": "scaling-compare",
            "repeats": 1,
            "circuit": {"J": math.pi / 2, "h": math.pi, "compile": False},
            "noise": {"gamma_zz": 0.0, "gamma_x": 0.0, "gamma_y": 0.0, "gamma_z": 0.0},
            "device": {"shots": "inf"},
            "grid": {"n": [3], "N": [1, 2], "M_C": [1], "M_P": [1]},
        }
    )
    out = run_experiment(m)
    for row in out.tables["summary"].rows:
        assert row["reached"] and row["ndecs_device_calls"] == 2
        assert row["smc_closed_form"] == pytest.approx(1 / 0.05**2)


def test_spd_scaling_small():
    m = ExperimentManifest.from_dict({"kind": "spd-scaling", "grid": {"D": [1, 2, 3, 4]}})
    out = run_experiment(m)
    assert [d["exact_m_max"] for d in out.summary["per_D"]] == [2, 4, 8, 16]
    assert out.summary["log_fit_slope"] > 0
    listed = run_experiment(m.with_overrides(grid={"m_max": [1, 2, 4, 8, 16]}))
    assert all(r["m_max_needed"] in (1, 2, 4, 8, 16) for r in listed.tables["thresholds"].rows)


def test_cli_writes_outputs(tmp_path, capsys):
    man = tmp_path / "g.toml"
    man.write_text('kind = "ndecs-grid"\nrepeats = 1\n[circuit]\nn = 4\nN = 1\n[grid]\nM_C = [5]\nM_P = [1]\n')
    assert main(["ndecs-grid", "--manifest", str(man), "--out", str(tmp_path / "o"), "--seed", "3", "--plot"]) == 0
    meta = json.loads((tmp_path / "o" / "ndecs-grid_summary.json").read_text())
    assert meta["root_seed"] == 3
    assert (tmp_path / "o" / "ndecs_grid.svg").exists()
    raw = ResultTable.read(tmp_path / "o" / "ndecs-grid_raw.csv")
    assert raw.column("root_seed") == ["3"]


def test_cli_threads_env(monkeypatch):
    monkeypatch.setenv("NDESIM_THREADS", "3")
    assert build_parser().parse_args(["verify"]).threads == 3
    with pytest.raises(SystemExit):
        build_parser().parse_args(["verify", "--seed", "-1"])


def test_cli_verify_exit_code(tmp_path, monkeypatch):
    from ndesim.harness import experiments
    from ndesim.harness.checks import CheckResult

    monkeypatch.setattr(experiments, "run_checks", lambda: [CheckResult("broken", False, 1.0, 0.0)])
    assert main(["verify", "--out", str(tmp_path)]) == 1
