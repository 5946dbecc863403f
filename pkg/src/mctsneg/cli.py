"""Command line: run experiments, benchmark GP kernels, generate domains."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .domains import generate_benchmark_domain
from .gpr import FAMILIES, kernel_benchmark, synthetic_concession_traces
from .tournament import (STATS_COLUMNS, ConfigError, ExperimentConfig, _Recorder, load_domain,
                         parse_overrides, run_experiment)


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def cmd_run(args) -> int:
    cfg = ExperimentConfig(domain=args.domain, agent_a=args.agent_a, agent_b=args.agent_b,
                           sessions=args.sessions, round_cap=args.round_cap,
                           base_seed=args.seed, agent_config=parse_overrides(args.set))
    cfg.validate()
    spec = load_domain(args.domain)
    recorder = None
    if args.stats or args.dump_posterior:
        recorder = _Recorder(stats=bool(args.stats), posterior=bool(args.dump_posterior))
    exp = run_experiment(cfg, spec, transcript_dir=args.transcript_dir, recorder=recorder)

    out = Path(args.out)
    out.write_text(exp.results_csv())
    summary = Path(args.summary) if args.summary else _sibling(out, ".summary.csv")
    summary.write_text(exp.summary_csv())
    if args.stats:
        with open(args.stats, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(STATS_COLUMNS)
            w.writerows(recorder.stats_rows)
    if args.dump_posterior:
        path = Path(args.dump_posterior)
        path.write_text("".join(line + "\n" for line in recorder.posterior_lines))
    sys.stdout.write(exp.summary_csv())
    return 0


def _load_traces(source: str) -> list[np.ndarray]:
    if source.startswith("gen:"):
        return synthetic_concession_traces(int(source[4:]))
    files = sorted(Path(source).glob("*.csv"))
    if not files:
        raise ConfigError(f"no .csv traces in {source}")
    # one bid per row, one numeric column per issue, optional header line
    traces = []
    for p in files:
        text = p.read_text().splitlines()
        skip = 1 if text and any(c.isalpha() for c in text[0]) else 0
        traces.append(np.loadtxt(p, delimiter=",", skiprows=skip, ndmin=2))
    return traces


def cmd_kernel_bench(args) -> int:
    traces = _load_traces(args.traces)
    families = args.kernels.split(",") if args.kernels else list(FAMILIES)
    table = kernel_benchmark(traces, families, refit_every=args.refit_every)
    n = len(traces)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["kernel", "avg_distance", "n_sequences"])
        for fam in families:
            w.writerow([fam, repr(table[fam]), n])
    for fam in sorted(families, key=table.get):
        print(f"{fam:8s} {table[fam]:.4f}")
    return 0


def cmd_gen_domain(args) -> int:
    spec = generate_benchmark_domain(args.seed, issue_count=args.issues)
    spec.save(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mctsneg", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log every session")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="play a session matrix between two agents")
    r.add_argument("--domain", required=True, help="domain JSON file or gen:SEED")
    r.add_argument("--agent-a", required=True)
    r.add_argument("--agent-b", required=True)
    r.add_argument("--sessions", type=int, default=20)
    r.add_argument("--round-cap", type=int, default=200)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="per-session CSV")
    r.add_argument("--summary", help="summary CSV (default: <out>.summary.csv)")
    r.add_argument("--stats", help="per-move MCTS tree statistics CSV")
    r.add_argument("--dump-posterior", metavar="PATH",
                   help="JSON lines with the top-10 utility hypotheses after each MCTS move")
    r.add_argument("--transcript-dir", help="write one transcript CSV per session here")
    r.add_argument("--set", action="append", default=[], metavar="NS.KEY=VALUE",
                   help="agent option, e.g. mcts.simulations=500 or tft.samples=2000")
    r.set_defaults(func=cmd_run)

    k = sub.add_parser("kernel-bench", help="rank GP kernels by next-bid forecast distance")
    k.add_argument("--traces", required=True, help="directory of CSV traces or gen:SEED")
    k.add_argument("--out", required=True)
    k.add_argument("--kernels", help="comma-separated subset of " + ",".join(FAMILIES))
    k.add_argument("--refit-every", type=int, default=5)
    k.set_defaults(func=cmd_kernel_bench)

    g = sub.add_parser("gen-domain", help="write a benchmark domain with two profiles")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--issues", type=int, default=10)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_domain)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
