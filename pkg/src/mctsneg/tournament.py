"""Seeded session matrices: both profile assignments, per-session CSV, summaries."""

from __future__ import annotations

import ast
import csv
import inspect
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .agents import AGENTS, NAMESPACES, agent_factory
from .domains import DomainError, DomainSpec, generate_benchmark_domain
from .protocol import SessionResult, Terminal, run_session

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("session", "assignment", "agent_a", "agent_b", "u_a", "u_b", "rounds",
                  "terminal", "seed")
SUMMARY_COLUMNS = ("assignment", "role", "agent", "mean_utility", "std_utility", "mean_rounds",
                   "agreement_rate", "sessions")
STATS_COLUMNS = ("assignment", "session", "role", "turn", "root_visits", "tree_size", "best_mean",
                 "elapsed_ms")


class ConfigError(ValueError):
    pass


def load_domain(source: str) -> DomainSpec:
    """``gen:SEED`` builds the benchmark domain; anything else is a JSON file path."""
    if source.startswith("gen:"):
        try:
            seed = int(source[4:])
        except ValueError:
            raise ConfigError(f"bad generator seed in {source!r}") from None
        return generate_benchmark_domain(seed)
    try:
        return DomainSpec.load(source)
    except FileNotFoundError:
        raise ConfigError(f"domain file not found: {source}") from None
    except (DomainError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"malformed domain file {source}: {e}") from None


def _literal(text: str) -> Any:
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_overrides(items: Iterable[str]) -> dict[str, dict[str, Any]]:
    """``["mcts.simulations=500", "tft.samples=2000"]`` -> per-namespace dicts."""
    out: dict[str, dict[str, Any]] = {}
    for item in items:
        name, sep, value = item.partition("=")
        ns, dot, key = name.strip().partition(".")
        if not sep or not dot or not key:
            raise ConfigError(f"expected namespace.key=value, got {item!r}")
        out.setdefault(ns, {})[key] = _literal(value.strip())
    return out


def _check_agent(name: str, config: dict[str, Any]) -> None:
    if name not in AGENTS:
        raise ConfigError(f"unknown agent {name!r}; choose from {', '.join(AGENTS)}")
    params = inspect.signature(AGENTS[name].__init__).parameters
    allowed = set(params) - {"self", "domain", "profile", "rng", "on_search"}
    bad = sorted(set(config) - allowed)
    if bad:
        raise ConfigError(f"unknown option(s) for {name}: {', '.join(bad)}; "
                          f"known: {', '.join(sorted(allowed))}")


@dataclass
class ExperimentConfig:
    domain: str
    agent_a: str
    agent_b: str
    sessions: int = 20
    round_cap: int = 200
    base_seed: int = 0
    # keyed by namespace (``mcts``, ``rw``, ``tft``, ``ntft``)
    agent_config: dict[str, dict[str, Any]] = field(default_factory=dict)

    def config_for(self, agent: str) -> dict[str, Any]:
        return dict(self.agent_config.get(NAMESPACES.get(agent, agent), {}))

    def validate(self) -> None:
        if self.sessions < 1:
            raise ConfigError("sessions must be >= 1")
        if self.round_cap < 1:
            raise ConfigError("round cap must be >= 1")
        known = set(NAMESPACES.values())
        for ns in self.agent_config:
            if ns not in known:
                raise ConfigError(f"unknown config namespace {ns!r}; choose from "
                                  f"{', '.join(sorted(known))}")
        for name in (self.agent_a, self.agent_b):
            _check_agent(name, self.config_for(name))


@dataclass(frozen=True)
class SessionRow:
    session: int
    assignment: int
    agent_a: str
    agent_b: str
    u_a: float
    u_b: float
    rounds: int
    terminal: str
    seed: int

    def cells(self) -> list[str]:
        return [str(self.session), str(self.assignment), self.agent_a, self.agent_b,
                repr(float(self.u_a)), repr(float(self.u_b)), str(self.rounds), self.terminal,
                str(self.seed)]


@dataclass(frozen=True)
class SummaryStats:
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    mean_rounds: float
    agreement_rate: float
    sessions: int


def _mean_std(xs: Sequence[float]) -> tuple[float, float]:
    m = math.fsum(xs) / len(xs)
    return m, math.sqrt(math.fsum((x - m) ** 2 for x in xs) / len(xs))


def summarize(results: Sequence[SessionResult | SessionRow]) -> SummaryStats:
    """Means, population standard deviations, mean proposal count, agreement rate."""
    if not results:
        raise ValueError("cannot summarise an empty result list")
    ua, ub, rounds, agreed = [], [], [], 0
    for r in results:
        if isinstance(r, SessionRow):
            a, b, term = r.u_a, r.u_b, r.terminal
        else:
            (a, b), term = r.utilities, r.terminal.value
        ua.append(a)
        ub.append(b)
        rounds.append(r.rounds)
        agreed += term == Terminal.ACCEPT.value
    ma, sa = _mean_std(ua)
    mb, sb = _mean_std(ub)
    return SummaryStats(ma, sa, mb, sb, math.fsum(rounds) / len(rounds), agreed / len(results),
                        len(results))


@dataclass
class Experiment:
    config: ExperimentConfig
    rows: list[SessionRow]
    summaries: dict[int, SummaryStats]

    def results_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        cfg = self.config
        for assignment, s in sorted(self.summaries.items()):
            for role, agent, mean, std in (("a", cfg.agent_a, s.mean_a, s.std_a),
                                           ("b", cfg.agent_b, s.mean_b, s.std_b)):
                w.writerow([assignment, role, agent, repr(mean), repr(std), repr(s.mean_rounds),
                            repr(s.agreement_rate), s.sessions])
        return buf.getvalue()


class _Recorder:
    """Collects per-move search statistics and posterior dumps from MCTS agents."""

    def __init__(self, stats: bool, posterior: bool):
        self.stats_rows: list[list] = []
        self.posterior_lines: list[str] = []
        self.want_stats, self.want_posterior = stats, posterior

    def hook(self, assignment: int, session: int, role: str) -> Callable:
        def on_search(turn, res, model):
            if self.want_stats:
                self.stats_rows.append([assignment, session, role, turn, res.root_visits,
                                        res.tree_size, repr(res.value_estimate),
                                        f"{res.elapsed_ms:.3f}"])
            if self.want_posterior:
                self.posterior_lines.append(json.dumps(
                    {"assignment": assignment, "session": session, "role": role, "turn": turn,
                     "top": json.loads(model.utility.dump_top(10))}, sort_keys=True))
        return on_search


def _factory(name: str, config: dict[str, Any], recorder: _Recorder | None, assignment: int,
             session: int, role: str):
    if name == "mcts" and recorder is not None:
        config = dict(config, on_search=recorder.hook(assignment, session, role))
    return agent_factory(name, **config)


def run_experiment(cfg: ExperimentConfig, spec: DomainSpec | None = None,
                   transcript_dir: str | Path | None = None,
                   recorder: _Recorder | None = None) -> Experiment:
    """Run ``cfg.sessions`` sessions per profile assignment.

    Assignment 1 gives agent A profile 1; assignment 2 swaps the profiles.
    Agent A always opens. Session ``i`` of either assignment uses seed
    ``base_seed + i``.
    """
    cfg.validate()
    if spec is None:
        spec = load_domain(cfg.domain)
    if len(spec.profiles) != 2:
        raise ConfigError("domain must carry exactly two profiles")
    if transcript_dir is not None:
        Path(transcript_dir).mkdir(parents=True, exist_ok=True)
    rows: list[SessionRow] = []
    summaries = {}
    for assignment in (1, 2):
        profiles = spec.profiles if assignment == 1 else spec.profiles[::-1]
        batch = []
        for i in range(cfg.sessions):
            seed = cfg.base_seed + i
            fa = _factory(cfg.agent_a, cfg.config_for(cfg.agent_a), recorder, assignment, i, "a")
            fb = _factory(cfg.agent_b, cfg.config_for(cfg.agent_b), recorder, assignment, i, "b")
            res = run_session(fa, fb, spec.domain, profiles, cfg.round_cap, seed)
            row = SessionRow(i, assignment, cfg.agent_a, cfg.agent_b, res.utilities[0],
                             res.utilities[1], res.rounds, res.terminal.value, seed)
            rows.append(row)
            batch.append(row)
            log.info("assignment %d session %d: u_a=%.3f u_b=%.3f rounds=%d %s", assignment, i,
                     row.u_a, row.u_b, row.rounds, row.terminal)
            if transcript_dir is not None:
                path = Path(transcript_dir) / f"a{assignment}_s{i:03d}.csv"
                path.write_text("\n".join(["turn,player,act,bid"] + res.history.transcript())
                                + "\n")
        summaries[assignment] = summarize(batch)
    return Experiment(cfg, rows, summaries)
