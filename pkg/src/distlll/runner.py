"""Seeded experiment runner: JSON config in, JSON report (and optional CSV) out.

A report has four top-level parts besides the config echo:

* ``records`` — one entry per seed, with the validity scan, metrics and the
  formula-versus-used parameter pairs;
* ``aggregates`` — summary statistics recomputable from ``records`` alone
  (:func:`aggregate` is the recipe);
* ``timing`` — wall-clock seconds, the only part allowed to differ between reruns;
* ``ok`` / ``errors`` — the overall verdict and structured error entries.

Seeds run on a thread pool sized by the ``DISTLLL_THREADS`` environment variable;
each seed owns its random streams, so the thread count never changes results.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import LLLError, SchemaError, SolverFailure, StageError
from .graph import FAMILIES, Graph, GraphGenSpec, generate, load_edgelist
from .oracle import verify_nonedge_tail
from .problems import (
    color_sparse,
    color_triangle_free,
    degree_bounded_lll,
    dss_sample,
    orientation_from_assignment,
    sinkless_orientation_lll,
)
from .problems.coloring import split_timings
from .problems.instances import sampled_set
from .problems.validate import scan_coloring, scan_degree_bounds, scan_dss, scan_orientation
from .resample import solve_cps
from .shatter import (
    auto_post_solver,
    component_size_bound,
    cps_post_solver,
    shattering_fraction_bound,
    solve_binary_lowrisk,
    solve_disjoint,
)
from .suite import run_oracle_suite

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("oracle-suite", "solver-run", "pipeline", "tail-bound")
PROBLEMS = {
    "solver-run": ("sinkless-orientation", "degree-bounded", "dss"),
    "pipeline": ("triangle-free", "sparse"),
}
THREADS_ENV = "DISTLLL_THREADS"

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "kind"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "kind": {"enum": list(KINDS)},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "uniqueItems": True},
        "graph": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["path"],
                    "properties": {"path": {"type": "string"}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["family", "n"],
                    "properties": {
                        "family": {"enum": list(FAMILIES)},
                        "n": {"type": "integer", "minimum": 2},
                        "degree": {"type": "integer", "minimum": 0},
                        "p": {"type": "number", "minimum": 0, "maximum": 1},
                        "intra_degree": {"type": "integer", "minimum": 0},
                        "target_zeta": {"type": "number", "minimum": 0},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
            ]
        },
        "problem": {"type": "string"},
        "solver": {"enum": ["disjoint", "binary-lowrisk", "cps"]},
        "params": {"type": "object"},
        "budget": {"type": "integer", "minimum": 1},
        "min_passing": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "csv": {"type": "string"},
        "artifacts": {"type": "string"},
    },
}

# Per-kind parameter whitelists; unknown overrides are schema errors too.
PARAMS = {
    ("solver-run", "sinkless-orientation"): {"split"},
    ("solver-run", "degree-bounded"): {"k"},
    ("solver-run", "dss"): {"mu", "alpha"},
    ("pipeline", "triangle-free"): {
        "gamma", "k", "epsilon", "activation", "slack_rounds", "threshold", "branch", "c_prime", "retries",
    },
    ("pipeline", "sparse"): {
        "epsilon", "x", "mu", "chi", "activation", "slack_rounds", "threshold", "branch", "c_prime", "retries",
    },
    ("tail-bound", None): {"p", "trials"},
    ("oracle-suite", None): set(),
}

# record metric -> aggregate statistics taken over the seeds that reported it
AGGREGATED = (
    "n_post_events",
    "post_fraction",
    "max_residual_component",
    "iterations",
    "num_colors",
    "colors_used",
    "slack_min",
    "slack_median",
    "empirical",
    "cases",
    "passed",
)


def validate_config(config: dict) -> dict:
    """Schema plus cross-field checks; returns a normalized copy (``seeds`` filled in)."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {exc.message}") from None
    cfg = json.loads(json.dumps(config))
    kind = cfg["kind"]
    cfg["seeds"] = cfg.get("seeds") or [0]
    problem = cfg.get("problem")
    if kind in PROBLEMS:
        if problem not in PROBLEMS[kind]:
            raise SchemaError(f"problem: {problem!r} is not one of {list(PROBLEMS[kind])} for kind {kind!r}")
        if "graph" not in cfg:
            raise SchemaError(f"graph: required for kind {kind!r}")
    elif problem is not None:
        raise SchemaError(f"problem: not used by kind {kind!r}")
    if kind == "tail-bound" and "graph" not in cfg:
        raise SchemaError("graph: required for kind 'tail-bound'")
    if kind == "tail-bound" and "p" not in cfg.get("params", {}):
        raise SchemaError("params/p: required for kind 'tail-bound'")
    if kind == "solver-run" and problem == "degree-bounded" and "k" not in cfg.get("params", {}):
        raise SchemaError("params/k: required for the degree-bounded problem")
    allowed = PARAMS[(kind, problem if kind in PROBLEMS else None)]
    unknown = sorted(set(cfg.get("params", {})) - allowed)
    if unknown:
        raise SchemaError(f"params: unknown overrides {unknown}; allowed {sorted(allowed)}")
    if "solver" in cfg and kind != "solver-run":
        raise SchemaError("solver: only meaningful for kind 'solver-run'")
    if "budget" in cfg and kind != "oracle-suite":
        raise SchemaError("budget: only meaningful for kind 'oracle-suite'")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}") from None
    return validate_config(raw)


# ---------------------------------------------------------------------------
# per-seed execution


def _graph_for(cfg: dict, seed: int, base_dir: Path) -> tuple[Graph, dict]:
    spec = cfg["graph"]
    if "path" in spec:
        path = Path(spec["path"])
        if not path.is_absolute():
            path = base_dir / path
        return load_edgelist(path), {"path": spec["path"]}
    gen = GraphGenSpec(
        spec["family"],
        spec["n"],
        degree=spec.get("degree"),
        p=spec.get("p"),
        seed=spec.get("seed", seed),
        intra_degree=spec.get("intra_degree"),
        target_zeta=spec.get("target_zeta"),
    )
    return generate(gen), gen.to_json()


def _seed_rng(seed: int) -> np.random.Generator:
    # distinct from the graph stream, which uses the bare seed
    return np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))


def _shatter_metrics(tr, n: int) -> dict:
    out = {
        "n_events": tr.n_events,
        "n_post_events": tr.n_post_events,
        "post_fraction": tr.n_post_events / tr.n_events if tr.n_events else 0.0,
        "max_residual_component": tr.max_residual_component,
        "residual_component_hist": {str(k): v for k, v in sorted(tr.residual_component_hist.items())},
    }
    p, d = tr.criteria.get("p"), tr.criteria.get("d")
    if p is not None and d:
        out["p"] = p
        out["d"] = d
        out["post_fraction_bound"] = 5 * shattering_fraction_bound(p, d)
        out["component_size_bound"] = component_size_bound(d, n)
    return out


def _solver_run(cfg: dict, g: Graph, rng) -> tuple[dict, dict, dict]:
    problem = cfg["problem"]
    params = cfg.get("params", {})
    timings: dict = {}
    t0 = time.perf_counter()
    if problem == "sinkless-orientation":
        solver = cfg.get("solver", "disjoint")
        if solver == "disjoint":
            inst = sinkless_orientation_lll(g, split=params.get("split", "euler"))
            phi, tr = solve_disjoint(inst, post_solver=cps_post_solver(), rng=rng)
            metrics = _shatter_metrics(tr, g.n)
        elif solver == "cps":
            inst = sinkless_orientation_lll(g)
            phi, tr = solve_cps(inst, rng=rng)
            if not tr.success:
                raise SolverFailure(f"resampling did not converge after {tr.iterations} iterations", tr)
            metrics = {"iterations": tr.iterations}
        else:
            raise SchemaError(f"solver: {solver!r} does not apply to sinkless orientation")
        arcs = orientation_from_assignment(g, phi)
        timings["solve"] = time.perf_counter() - t0
        scan = scan_orientation(g, arcs)
        artifact = {"kind": "orientation", "arcs": [list(a) for a in arcs]}
        return {"metrics": metrics, "scan": scan.to_json(), "artifact": artifact, "params": {"solver": solver}}, timings, scan
    if problem == "degree-bounded":
        k = params["k"]
        inst = degree_bounded_lll(g, k)
        phi, tr = solve_binary_lowrisk(inst, post_solver=auto_post_solver(), rng=rng)
        S = sorted(sampled_set(phi))
        timings["solve"] = time.perf_counter() - t0
        low, high = math.ceil(k / 3), 4 * k
        scan = scan_degree_bounds(g, S, low, high)
        artifact = {"kind": "degree-bounded", "S": S, "low": low, "high": high}
        return (
            {"metrics": {**_shatter_metrics(tr, g.n), "size": len(S)}, "scan": scan.to_json(), "artifact": artifact,
             "params": {"k": k, "solver": "binary-lowrisk"}},
            timings,
            scan,
        )
    # dss
    alpha = params.get("alpha", 0.25)
    mu = params.get("mu")
    X = list(range(g.n))
    S, tr = dss_sample(g, X, X, alpha, mu=mu, rng=rng)
    S = sorted(S)
    timings["solve"] = time.perf_counter() - t0
    scan = scan_dss(g, X, S, tr.mu, alpha)
    artifact = {"kind": "dss", "X": X, "S": S, "mu": tr.mu, "alpha": alpha}
    dss = tr.to_json()
    dss.pop("shatter")
    return (
        {"metrics": {**_shatter_metrics(tr.shatter, g.n), "size": len(S)}, "scan": scan.to_json(),
         "artifact": artifact, "params": dss},
        timings,
        scan,
    )


def _pipeline(cfg: dict, g: Graph, rng) -> tuple[dict, dict, dict]:
    params = dict(cfg.get("params", {}))
    if cfg["problem"] == "triangle-free":
        gamma = params.pop("gamma", None)
        res = color_triangle_free(g, gamma, rng, **params)
    else:
        epsilon = params.pop("epsilon", 0.5)
        res = color_sparse(g, epsilon, rng, **params)
    scan = scan_coloring(g, res.colors, max_colors=res.num_colors)
    slack = [res.state.slack(v) for v in range(g.n)] if hasattr(res.state, "slack") else []
    metrics = {
        "num_colors": res.num_colors,
        "colors_used": scan.stats["num_colors_used"],
        "delta": g.max_degree,
    }
    stages = res.trace.get("stages", [])
    metrics["stage_attempts"] = {s["stage"]: s["attempts"] for s in stages}
    if slack:
        metrics["slack_min"] = min(slack)
        metrics["slack_median"] = statistics.median(slack)
    artifact = {"kind": "coloring", "colors": list(res.colors), "max_colors": res.num_colors}
    return {"metrics": metrics, "scan": scan.to_json(), "artifact": artifact, "params": res.trace}, res.timings, scan


def _tail_bound(cfg: dict, g: Graph, rng) -> tuple[dict, dict, dict]:
    params = cfg["params"]
    t0 = time.perf_counter()
    res = verify_nonedge_tail(g, params["p"], trials=params.get("trials", 10**5), rng=rng)
    timings = {"monte-carlo": time.perf_counter() - t0}
    metrics = {**res.values, "p": params["p"], "size": g.n}
    return {"metrics": metrics, "scan": {"name": "nonedge-tail", "ok": res.passed, "violations": [] if res.passed else [res.cause]}}, timings, res.passed


def _oracle_suite(cfg: dict, seed: int) -> tuple[dict, dict, bool]:
    t0 = time.perf_counter()
    res = run_oracle_suite(cfg.get("budget", 500), rng=seed)
    timings = {"suite": time.perf_counter() - t0}
    cases = sum(s["cases"] for s in res["sections"])
    passed = sum(s["passed"] for s in res["sections"])
    return (
        {"metrics": {"cases": cases, "passed": passed}, "sections": res["sections"],
         "scan": {"name": "oracle-suite", "ok": res["ok"], "violations": []}},
        timings,
        res["ok"],
    )


def _run_seed(cfg: dict, seed: int, base_dir: Path) -> tuple[dict, dict]:
    """One seed; never raises for experiment failures (they become record errors)."""
    record: dict = {"seed": seed}
    timings: dict = {}
    start = time.perf_counter()
    try:
        if cfg["kind"] == "oracle-suite":
            body, timings, ok = _oracle_suite(cfg, seed)
        else:
            t0 = time.perf_counter()
            g, gspec = _graph_for(cfg, seed, base_dir)
            timings["graph"] = time.perf_counter() - t0
            record["graph"] = {**gspec, "num_edges": g.num_edges, "max_degree": g.max_degree}
            rng = _seed_rng(seed)
            runner = {"solver-run": _solver_run, "pipeline": _pipeline, "tail-bound": _tail_bound}[cfg["kind"]]
            body, more, ok = runner(cfg, g, rng)
            timings.update(more)
        record.update(body)
        record["ok"] = bool(ok)
    except (LLLError, OSError, ValueError) as exc:
        record["ok"] = False
        record["error"] = _error_entry(exc, seed)
        trace = getattr(exc, "trace", None)
        if isinstance(trace, dict):
            timings.update(split_timings(trace))
            record["trace"] = trace
    timings["total"] = time.perf_counter() - start
    return record, timings


def _error_entry(exc: BaseException, seed=None) -> dict:
    entry = {"type": type(exc).__name__, "message": str(exc)[:500]}
    if seed is not None:
        entry["seed"] = seed
    if isinstance(exc, StageError):
        entry["stage"] = exc.stage
    if isinstance(exc, FileNotFoundError):
        entry["type"] = "MissingFile"
    return entry


# ---------------------------------------------------------------------------
# aggregation


def aggregate(records: list[dict]) -> dict:
    """Summary statistics derived from the per-seed records only."""
    out: dict = {
        "seeds": len(records),
        "passing": sum(1 for r in records if r.get("ok")),
        "failing_seeds": [r["seed"] for r in records if not r.get("ok")],
    }
    for key in AGGREGATED:
        vals = [r["metrics"][key] for r in records if key in r.get("metrics", {}) and r["metrics"][key] is not None]
        if vals:
            out[key] = {
                "min": min(vals),
                "max": max(vals),
                "median": statistics.median(vals),
                "mean": sum(vals) / len(vals),
            }
    return out


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        return 1


def run(config: dict, base_dir=None, write: bool = True) -> dict:
    """Execute ``config`` over its seeds and return (and optionally write) the report.

    Raises :class:`SchemaError` before doing any work if the config is invalid.
    """
    cfg = validate_config(config)
    base_dir = Path(base_dir or ".")
    seeds = cfg["seeds"]
    start = time.perf_counter()
    threads = min(_threads(), len(seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _run_seed(cfg, s, base_dir), seeds))
    else:
        results = [_run_seed(cfg, s, base_dir) for s in seeds]
    records = [r for r, _ in results]
    agg = aggregate(records)
    need = cfg.get("min_passing", len(seeds))
    errors = [r["error"] for r in records if "error" in r]
    report = {
        "version": SCHEMA_VERSION,
        "code_version": __version__,
        "config": cfg,
        "records": [{k: v for k, v in r.items() if k != "artifact"} for r in records],
        "aggregates": agg,
        "ok": agg["passing"] >= need,
        "required_passing": need,
        "errors": errors,
        "timing": {
            "total_seconds": time.perf_counter() - start,
            "threads": threads,
            "per_seed": {str(s): t for s, (_, t) in zip(seeds, results)},
        },
    }
    if write:
        _write_outputs(cfg, report, records, base_dir)
    report["_artifacts"] = {r["seed"]: r["artifact"] for r in records if "artifact" in r}
    return report


def report_json(report: dict) -> str:
    """Canonical serialization (sorted keys); the artifact cache is dropped."""
    clean = {k: v for k, v in report.items() if not k.startswith("_")}
    return json.dumps(clean, sort_keys=True, indent=2, default=_json_default) + "\n"


def without_timing(report: dict) -> str:
    """The serialized report minus its timing section (what reruns must reproduce)."""
    clean = {k: v for k, v in report.items() if k != "timing" and not k.startswith("_")}
    return json.dumps(clean, sort_keys=True, indent=2, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    return str(x)


def _write_outputs(cfg: dict, report: dict, records: list[dict], base_dir: Path) -> None:
    if "output" in cfg:
        path = base_dir / cfg["output"]
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report_json(report), encoding="utf-8")
    if "artifacts" in cfg:
        folder = base_dir / cfg["artifacts"]
        folder.mkdir(parents=True, exist_ok=True)
        for r in records:
            if "artifact" in r:
                (folder / f"seed{r['seed']}.json").write_text(json.dumps(r["artifact"]), encoding="utf-8")
    if "csv" in cfg:
        write_csv(base_dir / cfg["csv"], records)


def node_rows(artifact: dict) -> list[dict]:
    """Per-node rows for the CSV hand-off (what each node ended up with)."""
    kind = artifact["kind"]
    if kind == "coloring":
        return [{"node": v, "color": c} for v, c in enumerate(artifact["colors"])]
    if kind == "orientation":
        out_deg: dict = {}
        for u, _ in artifact["arcs"]:
            out_deg[u] = out_deg.get(u, 0) + 1
        return [{"node": v, "out_degree": d} for v, d in sorted(out_deg.items())]
    members = set(artifact["S"])
    return [{"node": v, "in_sample": int(v in members)} for v in range(max(members, default=-1) + 1)]


def write_csv(path: Path, records: list[dict]) -> None:
    rows = []
    for r in records:
        if "artifact" in r:
            rows.extend({"seed": r["seed"], **row} for row in node_rows(r["artifact"]))
    fields = ["seed"] + sorted({k for row in rows for k in row} - {"seed"})
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# independent output validation

VALIDATE_KINDS = ("coloring", "orientation", "degree-bounded", "dss")


def validate_output(kind: str, graph: Graph, artifact: dict) -> dict:
    """Re-scan an output artifact against its graph; uses only the validity scanners."""
    if kind not in VALIDATE_KINDS:
        raise SchemaError(f"unknown artifact kind {kind!r}; expected one of {VALIDATE_KINDS}")
    try:
        if kind == "coloring":
            res = scan_coloring(graph, artifact["colors"], max_colors=artifact.get("max_colors"))
        elif kind == "orientation":
            res = scan_orientation(graph, artifact["arcs"])
        elif kind == "degree-bounded":
            res = scan_degree_bounds(graph, artifact["S"], artifact["low"], artifact["high"])
        else:
            res = scan_dss(graph, artifact["X"], artifact["S"], artifact["mu"], artifact["alpha"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"artifact is missing or mistypes a field: {exc}") from None
    return {"kind": kind, **res.to_json()}
