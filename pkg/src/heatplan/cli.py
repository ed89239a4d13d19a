"""Command-line workflows: synthesize data, cluster typical days, plan, benchmark, report.

All artifacts are plain JSON/CSV.  Final files are written atomically
(write to a temp file in the same directory, then rename); the only
incremental file is the per-evaluation log `evaluations.partial.jsonl`,
which is flushed line by line during a `plan` run so a crash preserves
partial results, and removed once the run's final artifacts are in place.

Exit codes: 0 success, 1 runtime failure, 2 input validation failure.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import datetime
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from .baselines import Nsga2Config, error_metrics, nsga2_run, random_search_run, saa_benchmark
from .dispatch import (
    BoilerSpec,
    ChpGenerator,
    HeaterStorageSpec,
    PumpSpec,
    StorageSpec,
    SystemConfig,
    TraditionalGenerator,
    evaluate_scheme,
    scheme_from_vector,
)
from .moo import AmboConfig, ambo_run, hypervolume_trace
from .scenario import (
    SELECTION_MODES,
    BundleFormatError,
    ScenarioBundle,
    SeasonFormatError,
    generate_typical_scenarios,
    load_bundle,
    load_season,
    save_bundle,
    save_season,
)
from .synth import PlanningSpace, SynthSpec, generate_season, generate_system, planning_space

ALGORITHMS = ("ambo", "nsga2", "random")
OBJECTIVE_NAMES = ("annual_cost", "neg_res_consumed")
MANIFEST_FORMAT = "run-manifest/v1"
FRONT_FORMAT = "front/v1"
SCHEME_TABLE_FORMAT = "scheme-table/v1"
BENCHMARK_FORMAT = "benchmark-report/v1"
SELECTION_REPORT_FORMAT = "selection-report/v1"

_CONFIG_SECTIONS = ("system", "planning", "scenarios", "ambo", "nsga2")

# schema defaults for the planning section (the small reference search space)
_PLANNING_DEFAULTS = {
    "n_eb": 1,
    "n_pump": 1,
    "n_tes": 1,
    "n_csh": 1,
    "eb_max": 60.0,
    "pump_max": 40.0,
    "tes_max": 300.0,
    "csh_max": 150.0,
}


class InputError(ValueError):
    """Bad arguments or malformed input files (exit code 2)."""


# ---------------------------------------------------------------------------
# Atomic file writes


def _write_atomic(path, data) -> None:
    """Write text or bytes to path via a same-directory temp file + rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if isinstance(data, bytes) else {"encoding": "utf-8"})) as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _save_atomic(path, writer) -> None:
    """Run a path-taking writer against a temp file, then rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _load_json(path, expect: str | None = None) -> dict:
    if not os.path.isfile(path):
        raise InputError(f"file not found: {path}")
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    if expect is not None and doc.get("format") != expect:
        raise InputError(f"{path}: unrecognized format {doc.get('format')!r} (expected {expect!r})")
    return doc


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# Configuration file


def _from_doc(cls, doc, where: str, defaults: dict | None = None):
    """Build a dataclass from a JSON object, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise InputError(f"{where}: expected an object")
    merged = dict(defaults or {})
    merged.update(doc)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise InputError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: {exc}") from None


def system_from_doc(doc) -> SystemConfig:
    """Build a SystemConfig from its config-file section (defaults apply)."""
    if not isinstance(doc, dict):
        raise InputError("system: expected an object")
    known = {f.name for f in dataclasses.fields(SystemConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise InputError(f"system: unknown keys {unknown}")
    kwargs = dict(doc)
    for key, cls in (("eb", BoilerSpec), ("pump", PumpSpec), ("tes", StorageSpec), ("csh", HeaterStorageSpec)):
        if key in kwargs:
            kwargs[key] = _from_doc(cls, kwargs[key], f"system.{key}")
    if "traditional" in kwargs:
        if not isinstance(kwargs["traditional"], list):
            raise InputError("system.traditional: expected a list")
        kwargs["traditional"] = tuple(
            _from_doc(TraditionalGenerator, d, f"system.traditional[{i}]")
            for i, d in enumerate(kwargs["traditional"])
        )
    if "chp" in kwargs:
        if not isinstance(kwargs["chp"], list):
            raise InputError("system.chp: expected a list")
        kwargs["chp"] = tuple(
            _from_doc(ChpGenerator, d, f"system.chp[{i}]") for i, d in enumerate(kwargs["chp"])
        )
    try:
        return SystemConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InputError(f"system: {exc}") from None


@dataclasses.dataclass
class RunConfig:
    """A parsed configuration file plus its raw bytes and hash."""

    system: SystemConfig
    space: PlanningSpace
    bundle: str | None
    ambo: dict
    nsga2: dict
    raw: bytes
    sha256: str


def load_config(path) -> RunConfig:
    """Parse and validate a configuration file (JSON, sectioned)."""
    if not os.path.isfile(path):
        raise InputError(f"config file not found: {path}")
    with open(path, "rb") as handle:
        raw = handle.read()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError("config: expected a JSON object")
    unknown = sorted(set(doc) - set(_CONFIG_SECTIONS))
    if unknown:
        raise InputError(f"config: unknown sections {unknown}")
    system = system_from_doc(doc.get("system", {}))
    space = _from_doc(PlanningSpace, doc.get("planning", {}), "planning", defaults=_PLANNING_DEFAULTS)
    scen = doc.get("scenarios", {})
    if not isinstance(scen, dict) or set(scen) - {"bundle"}:
        raise InputError('scenarios: expected {"bundle": <path>}')
    bundle = scen.get("bundle")
    if bundle is not None and not os.path.isabs(bundle):
        # relative bundle paths resolve against the config file's directory
        bundle = os.path.join(os.path.dirname(os.path.abspath(path)), bundle)
    sections = {}
    for name in ("ambo", "nsga2"):
        sect = doc.get(name, {})
        if not isinstance(sect, dict):
            raise InputError(f"{name}: expected an object")
        sections[name] = sect
    return RunConfig(
        system=system,
        space=space,
        bundle=bundle,
        ambo=sections["ambo"],
        nsga2=sections["nsga2"],
        raw=raw,
        sha256=hashlib.sha256(raw).hexdigest(),
    )


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    big = args.scale == "large"
    try:
        spec = SynthSpec(
            days=args.days,
            seed=args.seed,
            peak_electric=4000.0 if big else 400.0,
            peak_heat=1700.0 if big else 170.0,
            wind_capacity=2000.0 if big else 150.0,
            pv_capacity=1000.0 if big else 80.0,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    season = generate_season(spec)
    system = generate_system(args.scale, seed=args.seed)
    space = planning_space(args.scale)
    if os.path.isfile(args.out):
        raise InputError(f"--out must be a directory, not a file: {args.out}")
    os.makedirs(args.out, exist_ok=True)
    season_path = os.path.join(args.out, "season.csv")
    config_path = os.path.join(args.out, "config.json")
    _save_atomic(season_path, lambda p: save_season(p, season))
    config_doc = {
        "system": dataclasses.asdict(system),
        "planning": dataclasses.asdict(space),
        "scenarios": {"bundle": "bundle.json"},
        "ambo": {},
        "nsga2": {},
    }
    _write_atomic(config_path, _dumps(config_doc))
    print(f"wrote {season_path} ({len(season)} days)")
    print(f"wrote {config_path} ({args.scale} system)")
    return 0


# ---------------------------------------------------------------------------
# scenarios


def _report_path(bundle_path: str) -> str:
    root, ext = os.path.splitext(bundle_path)
    return f"{root}.report{ext or '.json'}"


def cmd_scenarios(args) -> int:
    if not os.path.isfile(args.input):
        raise InputError(f"season file not found: {args.input}")
    season = load_season(args.input)
    scenarios = generate_typical_scenarios(season, selection=args.selection, seed=args.seed)
    bundle = ScenarioBundle(
        scenarios=tuple(scenarios),
        selection=args.selection,
        source={"season": os.path.basename(args.input), "days": len(season), "seed": args.seed},
    )
    _save_atomic(args.out, lambda p: save_bundle(p, bundle))
    months = []
    for s in scenarios:
        months.append(
            {
                "month": s.month,
                "weight": float(s.weight),
                "series_days": {k: int(v) for k, v in sorted(s.series_days.items())},
                "dates": {k: season.days[v].date for k, v in sorted(s.series_days.items())},
                "adjustments": {k: dataclasses.asdict(s.adjustments[k]) for k in sorted(s.adjustments)},
            }
        )
    report_doc = {
        "format": SELECTION_REPORT_FORMAT,
        "selection": args.selection,
        "season": os.path.basename(args.input),
        "months": months,
    }
    report_path = _report_path(args.out)
    _write_atomic(report_path, _dumps(report_doc))
    print(f"wrote {args.out} ({len(scenarios)} typical days)")
    print(f"wrote {report_path}")
    return 0


# ---------------------------------------------------------------------------
# plan


def _tee_evaluations(objective, handle):
    """Wrap an objective so every completed call lands in the partial log."""
    state = {"index": 0}

    def wrapped(x):
        values = objective(x)
        pair = [float(v) for v in values]
        line = {"index": state["index"], "x": [float(v) for v in x], "objectives": pair}
        handle.write(json.dumps(line, sort_keys=True) + "\n")
        handle.flush()
        state["index"] += 1
        return pair

    return wrapped


def _record_lines(records, first_evaluations: int) -> str:
    """Serialize iteration records, tagging each with its evaluation count."""
    lines = []
    for r in records:
        doc = dataclasses.asdict(r)
        doc["evaluations"] = first_evaluations + r.iteration
        lines.append(json.dumps(doc, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def _trace_csv(records, first_evaluations: int) -> str:
    rows = [
        "# hypervolume of the observations in standardized objective space",
        "# under the iteration's adaptive reference point",
        "evaluations,hypervolume",
    ]
    for r in records:
        rows.append(f"{first_evaluations + r.iteration},{float(r.hypervolume)!r}")
    return "\n".join(rows) + "\n"


def _front_doc(front, algorithm: str, counts: dict) -> dict:
    points = []
    for idx, x, f in zip(front.indices, front.X, front.F):
        scheme = scheme_from_vector(np.asarray(x, dtype=float), **counts)
        points.append(
            {
                "index": int(idx),
                "x": [float(v) for v in x],
                "objectives": [float(v) for v in f],
                "scheme": dataclasses.asdict(scheme),
            }
        )
    return {
        "format": FRONT_FORMAT,
        "algorithm": algorithm,
        "provenance": front.provenance,
        "objectives": list(OBJECTIVE_NAMES),
        "points": points,
    }


def _scheme_table_doc(algorithm, X, Y, penalized, post_mu=None, post_sd=None) -> dict:
    rows = []
    for i, (x, y) in enumerate(zip(X, Y)):
        rows.append(
            {
                "index": i,
                "x": [float(v) for v in x],
                "observed": [float(v) for v in y],
                "posterior_mean": None if post_mu is None else [float(v) for v in post_mu[i]],
                "posterior_std": None if post_sd is None else [float(v) for v in post_sd[i]],
                "penalized": bool(penalized[i]),
            }
        )
    return {
        "format": SCHEME_TABLE_FORMAT,
        "algorithm": algorithm,
        "objectives": list(OBJECTIVE_NAMES),
        "has_posterior": post_mu is not None,
        "rows": rows,
    }


def cmd_plan(args) -> int:
    rc = load_config(args.config)
    if args.budget < 1:
        raise InputError("budget must be >= 1")
    if rc.bundle is None:
        raise InputError("config has no scenarios.bundle entry; `plan` needs typical days")
    if not os.path.isfile(rc.bundle):
        raise InputError(f"scenario bundle not found: {rc.bundle}")
    try:
        bundle = load_bundle(rc.bundle)
    except BundleFormatError as exc:
        raise InputError(str(exc)) from None
    days = bundle.typical_days()
    counts = rc.space.counts()
    bounds = np.asarray(rc.space.bounds(), dtype=float)
    budget = args.budget

    # resolve algorithm settings before touching the filesystem
    extras: dict[str, int] = {}
    if args.algorithm == "ambo":
        doc = dict(rc.ambo)
        seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
        n_init = doc.get("n_initial") or 2 * rc.space.dimension + 2
        if budget < n_init:
            raise InputError(
                f"budget {budget} is below the initial design size {n_init}; "
                "raise --budget or set a smaller ambo.n_initial"
            )
        doc.update(n_initial=int(n_init), n_iterations=budget - int(n_init), seed=seed)
        ambo_cfg = _from_doc(AmboConfig, doc, "ambo")
        extras = {"n_initial": ambo_cfg.n_initial, "n_iterations": ambo_cfg.n_iterations}
    elif args.algorithm == "nsga2":
        doc = dict(rc.nsga2)
        seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
        population = int(doc.get("population", 12))
        generations = budget // max(population, 1)
        if generations < 1:
            raise InputError(f"budget {budget} is below the population size {population}")
        doc.update(population=population, generations=generations, seed=seed)
        nsga2_cfg = _from_doc(Nsga2Config, doc, "nsga2")
        extras = {"population": population, "generations": generations}
        if budget % population:
            print(f"note: {budget % population} of {budget} budgeted evaluations unused "
                  f"(population {population})")
    else:
        seed = args.seed if args.seed is not None else 0

    if os.path.isfile(args.out):
        raise InputError(f"--out must be a directory, not a file: {args.out}")
    os.makedirs(args.out, exist_ok=True)
    _write_atomic(os.path.join(args.out, "config.json"), rc.raw)
    started = _utc_now()

    def objective(x):
        scheme = scheme_from_vector(np.asarray(x, dtype=float), **counts)
        pair = evaluate_scheme(rc.system, scheme, days)
        return pair.values

    partial_path = os.path.join(args.out, "evaluations.partial.jsonl")
    with open(partial_path, "w", encoding="utf-8") as log:
        wrapped = _tee_evaluations(objective, log)
        if args.algorithm == "ambo":
            result = ambo_run(wrapped, bounds, ambo_cfg)
            front, records = result.front, result.records
            X, Y = result.X, result.Y
            flags = [False] * ambo_cfg.n_initial + [r.penalized for r in result.records]
            table = _scheme_table_doc(
                args.algorithm, X, Y, flags, result.posterior_means, result.posterior_stds
            )
            first_evals = ambo_cfg.n_initial
        elif args.algorithm == "nsga2":
            front, _, records = nsga2_run(wrapped, bounds, nsga2_cfg)
            X = np.array([r.x for r in records])
            Y = np.array([r.objectives for r in records])
            table = _scheme_table_doc(args.algorithm, X, Y, [r.penalized for r in records])
            first_evals = 1
        else:
            front, records = random_search_run(wrapped, bounds, budget, seed=seed)
            X = np.array([r.x for r in records])
            Y = np.array([r.objectives for r in records])
            table = _scheme_table_doc(args.algorithm, X, Y, [r.penalized for r in records])
            first_evals = 1

    artifacts = ["config.json", "front.json", "iterations.jsonl", "schemes.json", "trace.csv"]
    _write_atomic(os.path.join(args.out, "iterations.jsonl"), _record_lines(records, first_evals))
    _write_atomic(os.path.join(args.out, "front.json"), _dumps(_front_doc(front, args.algorithm, counts)))
    _write_atomic(os.path.join(args.out, "schemes.json"), _dumps(table))
    _write_atomic(os.path.join(args.out, "trace.csv"), _trace_csv(records, first_evals))
    manifest = {
        "format": MANIFEST_FORMAT,
        "command": "plan",
        "algorithm": args.algorithm,
        "seed": int(seed),
        "budget": int(budget),
        "evaluations": int(len(Y)),
        "config_sha256": rc.sha256,
        "started_utc": started,
        "finished_utc": _utc_now(),
        "artifacts": artifacts,
        **extras,
    }
    _write_atomic(os.path.join(args.out, "manifest.json"), _dumps(manifest))
    os.unlink(partial_path)
    print(f"wrote {args.out} ({args.algorithm}, {len(Y)} evaluations, front size {len(front.F)})")
    return 0


# ---------------------------------------------------------------------------
# benchmark


def cmd_benchmark(args) -> int:
    if not os.path.isfile(args.season):
        raise InputError(f"season file not found: {args.season}")
    table_path = os.path.join(args.run_dir, "schemes.json")
    if not os.path.isfile(table_path):
        raise InputError(f"no scheme table in {args.run_dir}; run `heatplan plan` first")
    config_path = args.config or os.path.join(args.run_dir, "config.json")
    rc = load_config(config_path)
    season = load_season(args.season)
    table = _load_json(table_path, expect=SCHEME_TABLE_FORMAT)
    counts = rc.space.counts()
    has_posterior = bool(table.get("has_posterior"))

    out_rows, post, raw, saa = [], [], [], []
    for row in table["rows"]:
        x = np.asarray([float(v) for v in row["x"]], dtype=float)
        scheme = scheme_from_vector(x, **counts)
        try:
            pair = saa_benchmark(rc.system, scheme, season)
        except ValueError as exc:
            out_rows.append(
                {"index": int(row["index"]), "x": [float(v) for v in x], "observed": row["observed"],
                 "posterior_mean": row.get("posterior_mean"), "saa": None, "void_reason": str(exc)}
            )
            continue
        saa.append([pair.annual_cost, pair.neg_res_consumed])
        raw.append([float(v) for v in row["observed"]])
        post.append(
            [float(v) for v in row["posterior_mean"]] if has_posterior else raw[-1]
        )
        out_rows.append(
            {"index": int(row["index"]), "x": list(map(float, x)), "observed": raw[-1],
             "posterior_mean": row.get("posterior_mean"), "saa": saa[-1], "void_reason": None}
        )
    n_void = len(out_rows) - len(saa)
    if not saa:
        raise RuntimeError("every scheme was void on this season; nothing to score")
    report = error_metrics(np.array(post), np.array(raw), np.array(saa))
    doc = {
        "format": BENCHMARK_FORMAT,
        "season": os.path.basename(args.season),
        "season_days": len(season),
        "run": os.path.basename(os.path.normpath(args.run_dir)),
        "algorithm": table.get("algorithm"),
        "objectives": list(OBJECTIVE_NAMES),
        "posterior_means_available": has_posterior,
        "n_void": n_void,
        "errors": dataclasses.asdict(report),
        "schemes": out_rows,
    }
    out = args.out or os.path.join(args.run_dir, "benchmark.json")
    _write_atomic(out, _dumps(doc))
    print(
        f"wrote {out} ({len(saa)} schemes scored, {n_void} void; "
        f"e_ann_raw={report.e_ann_raw:.6f}, e_res_raw={report.e_res_raw:.6f})"
    )
    return 0


# ---------------------------------------------------------------------------
# report


def _run_label(path: str, used: set) -> str:
    base = os.path.basename(os.path.normpath(path)) or path
    label, k = base, 1
    while label in used:
        label = f"{base}#{k}"
        k += 1
    used.add(label)
    return label


def cmd_report(args) -> int:
    runs = []
    labels: set = set()
    for run_dir in args.run_dirs:
        manifest = _load_json(os.path.join(run_dir, "manifest.json"), expect=MANIFEST_FORMAT)
        table = _load_json(os.path.join(run_dir, "schemes.json"), expect=SCHEME_TABLE_FORMAT)
        front = _load_json(os.path.join(run_dir, "front.json"), expect=FRONT_FORMAT)
        runs.append((_run_label(run_dir, labels), manifest, table, front))
    hashes = {manifest["config_sha256"] for _, manifest, _, _ in runs}
    if len(hashes) > 1:
        raise InputError(
            "runs were made from different configurations; objective scalings are not comparable"
        )

    observed = [np.array([row["observed"] for row in table["rows"]], dtype=float)
                for _, _, table, _ in runs]
    if args.reference is not None:
        reference = np.asarray(args.reference, dtype=float)
    else:
        union = np.vstack(observed)
        span = union.max(axis=0) - union.min(axis=0)
        reference = union.max(axis=0) + 0.1 * span + 1e-6
    ref_text = "[" + ", ".join(repr(float(v)) for v in reference) + "]"

    trace_rows = [
        f"# reference: {ref_text}",
        "# hypervolume of the raw-observation front in raw objective units",
        "algorithm,run,evaluations,hypervolume",
    ]
    for (label, manifest, _, _), Y in zip(runs, observed):
        trace = hypervolume_trace(Y, reference)
        for i, hv in enumerate(trace):
            trace_rows.append(f"{manifest['algorithm']},{label},{i + 1},{float(hv)!r}")

    dim = len(runs[0][3]["points"][0]["x"]) if runs[0][3]["points"] else 0
    header = ["algorithm", "run", "provenance"]
    header += [f"x{i}" for i in range(dim)] + list(OBJECTIVE_NAMES)
    front_rows = [f"# reference: {ref_text}", ",".join(header)]
    for label, manifest, _, front in runs:
        for point in front["points"]:
            cells = [manifest["algorithm"], label, front["provenance"]]
            cells += [repr(float(v)) for v in point["x"]]
            cells += [repr(float(v)) for v in point["objectives"]]
            front_rows.append(",".join(cells))

    if os.path.isfile(args.out):
        raise InputError(f"--out must be a directory, not a file: {args.out}")
    os.makedirs(args.out, exist_ok=True)
    traces_path = os.path.join(args.out, "traces.csv")
    fronts_path = os.path.join(args.out, "fronts.csv")
    _write_atomic(traces_path, "\n".join(trace_rows) + "\n")
    _write_atomic(fronts_path, "\n".join(front_rows) + "\n")
    print(f"wrote {fronts_path}")
    print(f"wrote {traces_path} (reference {ref_text})")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heatplan",
        description="Capacity planning for hybrid heat sources over clustered typical days.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic season table and matching config")
    p.add_argument("--out", required=True, help="output directory (season.csv, config.json)")
    p.add_argument("--scale", choices=("small", "large"), default="small")
    p.add_argument("--days", type=int, default=180, help="season length in days")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("scenarios", help="cluster a season table into monthly typical days")
    p.add_argument("input", help="season table (CSV with hourly rows)")
    p.add_argument("--out", required=True, help="bundle path (a *.report.json lands next to it)")
    p.add_argument("--selection", choices=SELECTION_MODES, default="joint")
    p.add_argument("--seed", type=int, default=0, help="used by the random selection mode")
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("plan", help="run one planner over the configured system and bundle")
    p.add_argument("--config", required=True, help="configuration file (JSON)")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="ambo")
    p.add_argument("--budget", type=int, default=60, help="total evaluator calls")
    p.add_argument("--seed", type=int, default=None, help="overrides the seed in the config")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("benchmark", help="re-score a run's schemes against a full season")
    p.add_argument("season", help="season table (CSV)")
    p.add_argument("run_dir", help="a completed plan run directory")
    p.add_argument("--config", default=None, help="defaults to the run's config snapshot")
    p.add_argument("--out", default=None, help="defaults to RUN_DIR/benchmark.json")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="merge runs into plot-ready front and trace tables")
    p.add_argument("run_dirs", nargs="+", help="completed plan run directories")
    p.add_argument("--out", required=True, help="output directory (fronts.csv, traces.csv)")
    p.add_argument(
        "--reference",
        type=float,
        nargs=2,
        default=None,
        metavar=("COST", "NEG_RES"),
        help="fixed hypervolume reference point for the traces",
    )
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, SeasonFormatError, BundleFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver/model/filesystem failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
