import json
import statistics

import pytest

from distlll.__main__ import main
from distlll.errors import SchemaError
from distlll.graph import GraphGenSpec, generate, load_edgelist, save_edgelist
from distlll.runner import aggregate, report_json, run, validate_config, validate_output, without_timing


def sinkless(seeds, **extra):
    return {
        "version": 1,
        "kind": "solver-run",
        "problem": "sinkless-orientation",
        "graph": {"family": "random-regular", "n": 500, "degree": 8},
        "seeds": list(seeds),
        **extra,
    }


def test_oracle_suite_defaults_to_seed_zero():
    cfg = validate_config({"version": 1, "kind": "oracle-suite", "seeds": [], "budget": 5})
    assert cfg["seeds"] == [0]
    report = run(cfg, write=False)
    assert [r["seed"] for r in report["records"]] == [0] and report["ok"]


def test_sinkless_twenty_seeds(tmp_path):
    report = run(sinkless(range(1, 21), output="out/report.json", csv="out/nodes.csv"), base_dir=tmp_path)
    assert report["ok"] and report["aggregates"]["passing"] == 20
    assert all(r["scan"]["ok"] for r in report["records"])
    saved = json.loads((tmp_path / "out/report.json").read_text())
    assert saved == json.loads(report_json(report))
    rows = (tmp_path / "out/nodes.csv").read_text().splitlines()
    assert rows[0] == "seed,node,out_degree" and len(rows) == 1 + 20 * 500


def test_unknown_field_rejected_before_any_output(tmp_path):
    cfg = sinkless([0], output="r.json")
    cfg["colour"] = "blue"
    with pytest.raises(SchemaError, match="colour"):
        run(cfg, base_dir=tmp_path)
    assert not list(tmp_path.iterdir())


@pytest.mark.parametrize(
    "patch, message",
    [
        ({"params": {"k": 3}}, "unknown overrides"),
        ({"problem": "sparse"}, "not one of"),
        ({"budget": 3}, "budget"),
        ({"version": 2}, "version"),
    ],
)
def test_cross_field_errors(patch, message):
    with pytest.raises(SchemaError, match=message):
        validate_config({**sinkless([0]), **patch})


def test_missing_graph_file_is_structured_error(tmp_path, capsys):
    cfg = sinkless([0, 1])
    cfg["graph"] = {"path": "nope.txt"}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["run", str(tmp_path / "c.json")]) == 1
    report = json.loads(capsys.readouterr().out)
    assert {e["type"] for e in report["errors"]} == {"MissingFile"}
    assert [e["seed"] for e in report["errors"]] == [0, 1]


def test_aggregates_recomputable():
    report = run(sinkless(range(3)), write=False)
    assert aggregate(report["records"]) == report["aggregates"]
    it = [r["metrics"]["iterations"] for r in report["records"] if "iterations" in r["metrics"]]
    if it:
        assert report["aggregates"]["iterations"]["median"] == statistics.median(it)
    posts = [r["metrics"]["n_post_events"] for r in report["records"]]
    assert report["aggregates"]["n_post_events"]["max"] == max(posts)


def test_rerun_identical_modulo_timing():
    cfg = sinkless([4, 5])
    assert without_timing(run(cfg, write=False)) == without_timing(run(cfg, write=False))


def test_threads_do_not_change_results(monkeypatch):
    cfg = {
        "version": 1,
        "kind": "solver-run",
        "problem": "degree-bounded",
        "graph": {"family": "random-regular", "n": 300, "degree": 48},
        "params": {"k": 8},
        "seeds": [0, 1, 2],
    }
    monkeypatch.setenv("DISTLLL_THREADS", "1")
    one = run(cfg, write=False)
    monkeypatch.setenv("DISTLLL_THREADS", "3")
    three = run(cfg, write=False)
    assert three["timing"]["threads"] == 3
    assert without_timing(one) == without_timing(three)


def test_dss_artifact_revalidates(tmp_path):
    cfg = {
        "version": 1,
        "kind": "solver-run",
        "problem": "dss",
        "graph": {"family": "random-bipartite-regular", "n": 400, "degree": 32, "seed": 9},
        "params": {"mu": 8, "alpha": 0.25},
        "seeds": [0],
        "artifacts": "art",
    }
    report = run(cfg, base_dir=tmp_path)
    g = generate(GraphGenSpec("random-bipartite-regular", 400, degree=32, seed=9))
    artifact = json.loads((tmp_path / "art/seed0.json").read_text())
    check = validate_output("dss", g, artifact)
    assert check["ok"] == report["records"][0]["ok"] == True  # noqa: E712
    artifact["S"] = []
    assert not validate_output("dss", g, artifact)["ok"]


def test_tail_bound_kind():
    cfg = {
        "version": 1,
        "kind": "tail-bound",
        "graph": {"family": "random-bipartite-regular", "n": 30, "degree": 5, "seed": 1},
        "params": {"p": 0.5, "trials": 10_000},
    }
    report = run(cfg, write=False)
    assert report["ok"] and "empirical" in report["aggregates"]
    cfg["params"]["trials"] = 2000
    err = run(cfg, write=False)["errors"][0]
    assert err["type"] == "PreconditionError" and "10^4" in err["message"]


def test_pipeline_kind():
    cfg = {
        "version": 1,
        "kind": "pipeline",
        "problem": "triangle-free",
        "graph": {"family": "random-bipartite-regular", "n": 400, "degree": 64},
        "params": {"gamma": 0.9, "activation": 1.0, "slack_rounds": 3, "branch": "large"},
        "seeds": [0],
    }
    rec = run(cfg, write=False)["records"][0]
    assert rec["ok"] and rec["metrics"]["num_colors"] == 57


# -- command line ---------------------------------------------------------------------


def test_cli_run_and_validate(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps(sinkless([3], output="r.json", artifacts="art")))
    assert main(["run", str(tmp_path / "c.json")]) == 0
    assert "1/1 seeds passed" in capsys.readouterr().err
    g = generate(GraphGenSpec("random-regular", 500, degree=8, seed=3))
    save_edgelist(g, tmp_path / "g.txt")
    assert load_edgelist(tmp_path / "g.txt").num_edges == g.num_edges
    art = tmp_path / "art/seed3.json"
    assert main(["validate", "orientation", str(tmp_path / "g.txt"), str(art)]) == 0
    broken = json.loads(art.read_text())
    u, v = broken["arcs"][0]
    broken["arcs"][0] = [v, u]
    art.write_text(json.dumps(broken))
    capsys.readouterr()
    code = main(["validate", "orientation", str(tmp_path / "g.txt"), str(art)])
    out = json.loads(capsys.readouterr().out)
    assert (code == 1) == (not out["ok"])


def test_cli_bad_config_exit_code(tmp_path, capsys):
    (tmp_path / "c.json").write_text("{not json")
    assert main(["run", str(tmp_path / "c.json")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["errors"][0]["type"] == "SchemaError"


def test_cli_missing_artifact(tmp_path, capsys):
    g = tmp_path / "g.txt"
    save_edgelist(generate(GraphGenSpec("random-regular", 10, degree=3, seed=0)), g)
    assert main(["validate", "coloring", str(g), str(tmp_path / "none.json")]) == 2


def test_cli_oracle_suite(capsys):
    assert main(["oracle-suite", "--budget", "5", "--seeds", "1"]) == 0
    err = capsys.readouterr().err
    assert "seed 1 no-risk: 5/5" in err
