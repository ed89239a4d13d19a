"""End-to-end checks of the command-line workflows."""

import hashlib
import json
import os
import shutil

import pytest

from heatplan import cli
from heatplan.scenario import SeasonData, load_bundle, load_season, save_season
from heatplan.synth import planning_space


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """One synthetic workspace: season, bundle, a random run and an NSGA-II run."""
    root = tmp_path_factory.mktemp("cliwork")
    assert cli.main(["synth", "--out", str(root), "--days", "35", "--seed", "3"]) == 0
    assert cli.main(["scenarios", str(root / "season.csv"), "--out", str(root / "bundle.json")]) == 0
    base = ["plan", "--config", str(root / "config.json")]
    assert cli.main(base + ["--algorithm", "random", "--budget", "4", "--seed", "1",
                            "--out", str(root / "run_random")]) == 0
    assert cli.main(base + ["--algorithm", "nsga2", "--budget", "12", "--seed", "0",
                            "--out", str(root / "run_nsga12")]) == 0
    season = load_season(root / "season.csv")
    save_season(root / "short.csv", SeasonData(days=season.days[:6]))
    return root


def test_synth_outputs(work):
    season = load_season(work / "season.csv")
    assert len(season) == 35
    rc = cli.load_config(work / "config.json")
    assert len(rc.system.chp) == 2 and len(rc.system.traditional) == 1
    assert rc.space.dimension == 4
    # relative bundle path resolves against the config file's directory
    assert rc.bundle == str(work / "bundle.json")


def test_scenarios_bundle_and_report(work):
    bundle = load_bundle(work / "bundle.json")
    assert [s.month for s in bundle.scenarios] == ["2025-11", "2025-12"]
    assert [s.weight for s in bundle.scenarios] == [30.0, 5.0]
    report = json.loads((work / "bundle.report.json").read_text())
    assert report["format"] == cli.SELECTION_REPORT_FORMAT
    assert report["selection"] == "joint"
    months = report["months"]
    assert [m["month"] for m in months] == ["2025-11", "2025-12"]
    adj = months[0]["adjustments"]["heat_load"]
    assert set(adj) == {"a", "b", "adjusted", "message"}
    assert all(date.startswith("2025-11") for date in months[0]["dates"].values())


def test_scenarios_independent_mode(work, tmp_path):
    out = tmp_path / "ind.json"
    assert cli.main(["scenarios", str(work / "season.csv"), "--out", str(out),
                     "--selection", "independent"]) == 0
    bundle = load_bundle(out)
    assert bundle.selection == "independent"
    assert all(not a.adjusted for s in bundle.scenarios for a in s.adjustments.values())


def test_scenarios_missing_column_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,electric_load_mw,heat_load_mw,wind_mw\n")
    assert cli.main(["scenarios", str(bad), "--out", str(tmp_path / "b.json")]) == 2
    assert "pv_mw" in capsys.readouterr().err


def test_plan_random_run_dir(work):
    run = work / "run_random"
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["format"] == cli.MANIFEST_FORMAT
    assert manifest["algorithm"] == "random"
    assert manifest["seed"] == 1
    assert manifest["budget"] == 4 and manifest["evaluations"] == 4
    snapshot = (run / "config.json").read_bytes()
    assert manifest["config_sha256"] == hashlib.sha256(snapshot).hexdigest()
    assert snapshot == (work / "config.json").read_bytes()
    for name in manifest["artifacts"]:
        assert (run / name).is_file()
    assert not (run / "evaluations.partial.jsonl").exists()

    records = [json.loads(line) for line in (run / "iterations.jsonl").read_text().splitlines()]
    assert len(records) == 4
    assert [r["evaluations"] for r in records] == [1, 2, 3, 4]
    assert all(len(r["objectives"]) == 2 for r in records)

    front = json.loads((run / "front.json").read_text())
    assert front["provenance"] == "raw-observation"
    assert 1 <= len(front["points"]) <= 4
    keys = set(front["points"][0]["scheme"])
    assert keys == {"eb_rated", "pump_rated", "tes_capacity", "csh_capacity"}

    table = json.loads((run / "schemes.json").read_text())
    assert table["has_posterior"] is False and len(table["rows"]) == 4
    trace = (run / "trace.csv").read_text().splitlines()
    assert trace[-1].split(",")[0] == "4" and len([l for l in trace if not l.startswith("#")]) == 5


def test_plan_determinism(work, tmp_path):
    args = ["plan", "--config", str(work / "config.json"), "--algorithm", "random",
            "--budget", "4", "--seed", "9"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    for name in ("iterations.jsonl", "front.json", "schemes.json", "trace.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_plan_ambo_artifacts(work, tmp_path):
    doc = json.loads((work / "config.json").read_text())
    doc["ambo"] = {"n_initial": 4, "n_restarts": 2, "n_samples": 32}
    cfg = work / "config_ambo.json"  # same directory, so the bundle path resolves
    cfg.write_text(json.dumps(doc))
    run = tmp_path / "run_ambo"
    assert cli.main(["plan", "--config", str(cfg), "--algorithm", "ambo",
                     "--budget", "6", "--seed", "2", "--out", str(run)]) == 0
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["n_initial"] == 4 and manifest["n_iterations"] == 2
    table = json.loads((run / "schemes.json").read_text())
    assert table["has_posterior"] is True and len(table["rows"]) == 6
    assert all(len(r["posterior_mean"]) == 2 for r in table["rows"])
    front = json.loads((run / "front.json").read_text())
    assert front["provenance"] == "posterior-mean"
    records = [json.loads(line) for line in (run / "iterations.jsonl").read_text().splitlines()]
    assert [r["evaluations"] for r in records] == [4, 5]


def test_plan_nsga2_population_recorded(work):
    manifest = json.loads((work / "run_nsga12" / "manifest.json").read_text())
    assert manifest["population"] == 12  # schema default
    assert manifest["generations"] == 1
    assert manifest["evaluations"] == 12
    records = (work / "run_nsga12" / "iterations.jsonl").read_text().splitlines()
    assert len(records) == 12


def test_plan_nsga2_custom_population(work, tmp_path):
    doc = json.loads((work / "config.json").read_text())
    doc["nsga2"] = {"population": 4}
    cfg = work / "config_n4.json"
    cfg.write_text(json.dumps(doc))
    run = tmp_path / "run_n4"
    assert cli.main(["plan", "--config", str(cfg), "--algorithm", "nsga2",
                     "--budget", "8", "--seed", "5", "--out", str(run)]) == 0
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["population"] == 4 and manifest["generations"] == 2
    assert manifest["evaluations"] == 8


def test_plan_validation_exit_codes(work, tmp_path, capsys):
    cfg = str(work / "config.json")
    out = str(tmp_path / "r")
    assert cli.main(["plan", "--config", str(tmp_path / "nope.json"), "--out", out]) == 2

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"systems": {}}))
    assert cli.main(["plan", "--config", str(bad), "--out", out]) == 2
    assert "unknown sections" in capsys.readouterr().err

    lone = tmp_path / "lone.json"
    lone.write_text(json.dumps({"scenarios": {"bundle": "nothere.json"}}))
    assert cli.main(["plan", "--config", str(lone), "--out", out]) == 2
    assert "bundle not found" in capsys.readouterr().err

    # ambo needs at least the initial design (2d + 2 = 10 here)
    assert cli.main(["plan", "--config", cfg, "--algorithm", "ambo",
                     "--budget", "3", "--out", out]) == 2
    # nsga2 needs at least one full population
    assert cli.main(["plan", "--config", cfg, "--algorithm", "nsga2",
                     "--budget", "5", "--out", out]) == 2
    # --out must not be an existing file
    stray = tmp_path / "stray"
    stray.write_text("x")
    assert cli.main(["plan", "--config", cfg, "--algorithm", "random",
                     "--budget", "2", "--out", str(stray)]) == 2


def test_plan_unknown_algorithm_is_usage_error(work, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["plan", "--config", str(work / "config.json"), "--algorithm", "sa",
                  "--out", str(tmp_path / "r")])
    assert exc.value.code == 2


def test_plan_runtime_failure_preserves_partial_log(work, tmp_path, monkeypatch, capsys):
    def boom(cfg, scheme, days, settings=None):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(cli, "evaluate_scheme", boom)
    run = tmp_path / "run_fail"
    rc = cli.main(["plan", "--config", str(work / "config.json"), "--algorithm", "random",
                   "--budget", "3", "--seed", "0", "--out", str(run)])
    assert rc == 1
    assert "synthetic failure" in capsys.readouterr().err
    assert (run / "evaluations.partial.jsonl").exists()
    assert not (run / "manifest.json").exists()


def test_benchmark_run(work, tmp_path):
    out = tmp_path / "bench.json"
    assert cli.main(["benchmark", str(work / "short.csv"), str(work / "run_random"),
                     "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["format"] == cli.BENCHMARK_FORMAT
    assert doc["season_days"] == 6
    assert doc["posterior_means_available"] is False
    assert doc["n_void"] == 0
    assert len(doc["schemes"]) == 4
    assert all(len(r["saa"]) == 2 for r in doc["schemes"])
    errors = doc["errors"]
    assert errors["n_schemes"] == 4
    for key in ("e_ann_posterior", "e_res_posterior", "e_ann_raw", "e_res_raw"):
        assert errors[key] >= 0.0
    # without posterior means, the posterior columns fall back to the raw ones
    assert errors["e_ann_posterior"] == errors["e_ann_raw"]
    assert errors["e_res_posterior"] == errors["e_res_raw"]

    # default output path lands inside the run directory
    assert cli.main(["benchmark", str(work / "short.csv"), str(work / "run_random")]) == 0
    assert (work / "run_random" / "benchmark.json").is_file()


def test_benchmark_missing_inputs_exit_2(work, tmp_path):
    assert cli.main(["benchmark", str(tmp_path / "nope.csv"), str(work / "run_random")]) == 2
    assert cli.main(["benchmark", str(work / "short.csv"), str(tmp_path)]) == 2


def test_report_two_runs(work, tmp_path):
    out = tmp_path / "rep"
    assert cli.main(["report", str(work / "run_random"), str(work / "run_nsga12"),
                     "--out", str(out)]) == 0

    fronts = (out / "fronts.csv").read_text().splitlines()
    assert fronts[0].startswith("# reference: ")
    header = fronts[1].split(",")
    assert header[:3] == ["algorithm", "run", "provenance"]
    assert header[3] == "x0" and header[-2:] == ["annual_cost", "neg_res_consumed"]
    assert {line.split(",")[0] for line in fronts[2:]} == {"random", "nsga2"}

    traces = (out / "traces.csv").read_text().splitlines()
    assert traces[0].startswith("# reference: ")
    rows = [line.split(",") for line in traces if not line.startswith("#")][1:]
    by_run = {}
    for algo, run, evals, hv in rows:
        by_run.setdefault(run, []).append((int(evals), float(hv)))
    assert [e for e, _ in by_run["run_random"]] == [1, 2, 3, 4]
    assert [e for e, _ in by_run["run_nsga12"]] == list(range(1, 13))
    for series in by_run.values():
        hvs = [hv for _, hv in series]
        # fixed shared reference makes the prefix trace monotone
        assert all(b >= a for a, b in zip(hvs, hvs[1:]))


def test_report_reference_override(work, tmp_path):
    out = tmp_path / "rep2"
    assert cli.main(["report", str(work / "run_random"), "--out", str(out),
                     "--reference", "100000000.0", "-0.5"]) == 0
    header = (out / "traces.csv").read_text().splitlines()[0]
    assert "100000000.0" in header and "-0.5" in header


def test_report_mismatched_configs_exit_2(work, tmp_path, capsys):
    clone = tmp_path / "clone"
    shutil.copytree(work / "run_random", clone)
    manifest = json.loads((clone / "manifest.json").read_text())
    manifest["config_sha256"] = "0" * 64
    (clone / "manifest.json").write_text(json.dumps(manifest))
    assert cli.main(["report", str(work / "run_random"), str(clone),
                     "--out", str(tmp_path / "rep3")]) == 2
    assert "different configurations" in capsys.readouterr().err


def test_write_atomic_replaces_without_litter(tmp_path):
    target = tmp_path / "f.txt"
    cli._write_atomic(target, "one")
    cli._write_atomic(target, "two")
    assert target.read_text() == "two"
    assert [n for n in os.listdir(tmp_path) if n.startswith(".tmp-")] == []


def test_load_config_schema(tmp_path):
    empty = tmp_path / "c.json"
    empty.write_text("{}")
    rc = cli.load_config(empty)
    assert rc.space == planning_space("small")  # schema defaults
    assert rc.system.tau == 0.05 and rc.system.chp == ()
    assert rc.bundle is None

    bad_section = tmp_path / "c2.json"
    bad_section.write_text(json.dumps({"ambo": 5}))
    with pytest.raises(cli.InputError, match="ambo"):
        cli.load_config(bad_section)

    bad_planning = tmp_path / "c3.json"
    bad_planning.write_text(json.dumps({"planning": {"n_ebx": 1}}))
    with pytest.raises(cli.InputError, match="unknown keys"):
        cli.load_config(bad_planning)

    bad_system = tmp_path / "c4.json"
    bad_system.write_text(json.dumps({"system": {"tau": -1.0}}))
    with pytest.raises(cli.InputError, match="system"):
        cli.load_config(bad_system)
