import csv
import io
import json
import statistics

import pytest

from mctsneg.cli import main
from mctsneg.domains import Bid, generate_benchmark_domain
from mctsneg.protocol import History, SessionResult, Terminal
from mctsneg.tournament import (RESULT_COLUMNS, ConfigError, ExperimentConfig, SessionRow,
                                load_domain, parse_overrides, run_experiment, summarize)

import oracles


def result(ua, ub, rounds=3, terminal=Terminal.ACCEPT):
    return SessionResult(Bid({"x": 1}), (ua, ub), rounds, terminal, History())


def test_summarize_examples():
    s = summarize([result(0.5, 0.5)])
    assert (s.mean_a, s.std_a, s.mean_b) == (0.5, 0.0, 0.5)
    s = summarize([result(0.4, 0.0), result(0.6, 0.0)])
    assert s.mean_a == pytest.approx(0.5) and s.std_a == pytest.approx(0.1)
    s = summarize([result(0, 0, 200, Terminal.ROUND_CAP)] * 3)
    assert s.agreement_rate == 0.0 and s.mean_rounds == 200
    with pytest.raises(ValueError):
        summarize([])


def test_overrides():
    got = parse_overrides(["mcts.simulations=500", "tft.samples=20", "mcts.kernel=rbf"])
    assert got == {"mcts": {"simulations": 500, "kernel": "rbf"}, "tft": {"samples": 20}}
    with pytest.raises(ConfigError):
        parse_overrides(["simulations=5"])


def test_config_errors_before_any_session(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig("gen:1", "mcts", "hardliner", sessions=1))
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig("gen:1", "mcts", "random-walker", sessions=0))
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig("gen:1", "mcts", "random-walker",
                                        agent_config={"mcts": {"depth": 3}}))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(str(bad), "random-walker", "random-walker"))
    with pytest.raises(ConfigError):
        load_domain(str(tmp_path / "missing.json"))


def small_experiment(seed=3, sessions=2):
    spec = generate_benchmark_domain(5, issue_count=3)
    cfg = ExperimentConfig("gen:5", "random-walker", "tit-for-tat", sessions=sessions,
                           round_cap=30, base_seed=seed, agent_config={"tft": {"samples": 200}})
    return run_experiment(cfg, spec)


def test_rows_cover_both_assignments():
    exp = small_experiment(sessions=1)
    assert [(r.assignment, r.seed) for r in exp.rows] == [(1, 3), (2, 3)]


def test_same_seed_same_csv():
    assert small_experiment().results_csv() == small_experiment().results_csv()
    assert small_experiment(seed=3).results_csv() != small_experiment(seed=4).results_csv()


def test_summary_recomputed_from_csv():
    exp = small_experiment(sessions=4)
    rows = list(csv.DictReader(io.StringIO(exp.results_csv())))
    assert tuple(rows[0]) == RESULT_COLUMNS and len(rows) == 8
    summary = list(csv.DictReader(io.StringIO(exp.summary_csv())))
    for line in summary:
        mine = [r for r in rows if r["assignment"] == line["assignment"]]
        us = [float(r["u_" + line["role"]]) for r in mine]
        assert float(line["mean_utility"]) == pytest.approx(statistics.fmean(us), abs=1e-12)
        assert float(line["std_utility"]) == pytest.approx(statistics.pstdev(us), abs=1e-12)
        assert float(line["std_utility"]) == pytest.approx(oracles.population_std(us), abs=1e-12)
        assert float(line["mean_rounds"]) == pytest.approx(
            statistics.fmean(int(r["rounds"]) for r in mine), abs=1e-12)
        agreed = sum(r["terminal"] == "accept" for r in mine) / len(mine)
        assert float(line["agreement_rate"]) == pytest.approx(agreed, abs=1e-12)


def test_session_row_cells_use_repr():
    row = SessionRow(0, 1, "a", "b", 0.1 + 0.2, 0.5, 3, "accept", 7)
    assert row.cells()[4] == "0.30000000000000004"


def test_cli_run_and_outputs(tmp_path):
    out = tmp_path / "r.csv"
    stats = tmp_path / "tree.csv"
    post = tmp_path / "post.jsonl"
    dom = tmp_path / "d.json"
    assert main(["gen-domain", "--seed", "2", "--issues", "3", "--out", str(dom)]) == 0
    args = ["run", "--domain", str(dom), "--agent-a", "mcts", "--agent-b", "random-walker",
            "--sessions", "1", "--round-cap", "20", "--seed", "1", "--out", str(out),
            "--stats", str(stats), "--dump-posterior", str(post),
            "--transcript-dir", str(tmp_path / "tr"),
            "--set", "mcts.simulations=60", "--set", "mcts.hypotheses=20"]
    assert main(args) == 0
    first = out.read_bytes()
    assert len(first.decode().splitlines()) == 3
    assert (tmp_path / "r.summary.csv").exists()
    assert stats.read_text().startswith("assignment,session,role,turn,root_visits,tree_size,")
    assert json.loads(post.read_text().splitlines()[0])["top"]
    assert sorted(p.name for p in (tmp_path / "tr").iterdir()) == ["a1_s000.csv", "a2_s000.csv"]
    assert main(args) == 0
    assert out.read_bytes() == first


def test_cli_reports_config_errors(tmp_path, capsys):
    code = main(["run", "--domain", "gen:1", "--agent-a", "mcts", "--agent-b", "nobody",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2 and "unknown agent" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


def test_cli_kernel_bench(tmp_path):
    traces = tmp_path / "traces"
    traces.mkdir()
    for k in range(2):
        rows = "\n".join(f"{5 + 0.1 * t * (k + 1)},{7 - 0.2 * t}" for t in range(8))
        (traces / f"t{k}.csv").write_text("issue_a,issue_b\n" + rows + "\n")
    out = tmp_path / "k.csv"
    assert main(["kernel-bench", "--traces", str(traces), "--out", str(out),
                 "--kernels", "rbf,rqf"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "kernel,avg_distance,n_sequences"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["rbf", "rqf"]
    assert all(ln.endswith(",2") for ln in lines[1:])
