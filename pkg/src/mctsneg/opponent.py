"""Opponent models: bidding-strategy forecaster, utility hypotheses, acceptance.

The strategy model runs one GP regressor per numeric issue over the
opponent's own turn index, and smoothed frequencies for categorical issues.
The utility model is a Bayesian mixture of additive triangular-function
hypotheses, updated under a constant-concession assumption.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .domains import Bid, Categorical, Domain, NumericContinuous, NumericDiscrete
from .gpr import GaussianProcess, Kernel, fit_hyperparams


class ModelError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Bidding strategy
# ---------------------------------------------------------------------------


class StrategyModel:
    """Forecasts the opponent's next bid from its previous ones."""

    def __init__(self, domain: Domain, family: str = "rqf", refit_every: int = 5,
                 smoothing: float = 0.1):
        self.domain = domain
        self.family = family
        self.refit_every = refit_every
        self.smoothing = smoothing
        self.turns: list[int] = []
        self._numeric = [j for j, iss in enumerate(domain.issues) if not isinstance(iss, Categorical)]
        self._categorical = [j for j, iss in enumerate(domain.issues) if isinstance(iss, Categorical)]
        self._ys: dict[int, list[float]] = {j: [] for j in self._numeric}
        self.counts: dict[int, np.ndarray] = {
            j: np.zeros(domain.issues[j].size, dtype=int) for j in self._categorical}
        self.kernels: dict[int, Kernel] = {j: Kernel(family) for j in self._numeric}
        self.models: dict[int, GaussianProcess] = {}
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.turns)

    def observe(self, turn: int, bid: Mapping[str, Any]) -> "StrategyModel":
        if self.turns and turn <= self.turns[-1]:
            raise ModelError(f"turn {turn} not after last observed turn {self.turns[-1]}")
        row = self.domain.encode(bid)
        self.turns.append(turn)
        for j in self._numeric:
            self._ys[j].append(float(row[j]))
        for j in self._categorical:
            self.counts[j][int(row[j])] += 1
        n = len(self.turns)
        refit = n >= 2 and (n == 2 or n % self.refit_every == 0)
        for j in self._numeric:
            if refit:
                self.kernels[j] = fit_hyperparams(self.turns, self._ys[j], self.family,
                                                  default=self.kernels[j])
            self.models[j] = GaussianProcess(self.kernels[j], self.turns, self._ys[j])
        self._cache.clear()
        return self

    def gp(self, key: str) -> GaussianProcess:
        return self.models[self.domain.position(key)]

    def categorical_probs(self, j: int) -> np.ndarray:
        c = self.counts[j] + self.smoothing
        return c / c.sum()

    def moments(self, turn: int) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and sd per issue (categorical columns are zero)."""
        got = self._cache.get(turn)
        if got is None:
            n = len(self.domain)
            mean, sd = np.zeros(n), np.zeros(n)
            for j in self._numeric:
                p = self.models[j].predict(turn)
                mean[j], sd[j] = p.mean, math.sqrt(p.variance)
            got = self._cache[turn] = (mean, sd)
        return got

    def sample_rows(self, turn: int, rng: np.random.Generator, n: int) -> np.ndarray:
        if not self.turns:
            raise ModelError("no opponent bid observed yet")
        mean, sd = self.moments(turn)
        raw = mean + sd * rng.standard_normal((n, len(mean)))
        out = np.empty_like(raw)
        for j in self._numeric:
            out[:, j] = self.domain.issues[j].snap(raw[:, j])
        for j in self._categorical:
            p = self.categorical_probs(j)
            out[:, j] = rng.choice(len(p), size=n, p=p)
        return out

    def predict_next_bid(self, turn: int, rng: np.random.Generator) -> Bid:
        return self.domain.decode(self.sample_rows(turn, rng, 1)[0])


# ---------------------------------------------------------------------------
# Utility hypotheses
# ---------------------------------------------------------------------------


class Shape(enum.Enum):
    UP = "up"
    DOWN = "down"
    PEAK = "peak"


@dataclass(frozen=True)
class TriangularFn:
    a: float
    b: float
    shape: Shape
    c: float | None = None

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("triangular domain needs a < b")
        if self.shape is Shape.PEAK and not (self.c is not None and self.a <= self.c <= self.b):
            raise ValueError("peak must lie in [a, b]")

    @property
    def apex(self) -> float:
        """Where the function reaches 1; every shape is a peak somewhere."""
        if self.shape is Shape.UP:
            return self.b
        if self.shape is Shape.DOWN:
            return self.a
        return self.c

    def __call__(self, v: float) -> float:
        if not self.a - 1e-12 <= v <= self.b + 1e-12:
            raise ValueError(f"{v} outside [{self.a}, {self.b}]")
        return float(_tri(np.asarray(v, dtype=float), self.a, self.apex, self.b))

    def to_json(self) -> dict:
        d = {"a": self.a, "b": self.b, "shape": self.shape.value}
        if self.shape is Shape.PEAK:
            d["c"] = self.c
        return d


def _tri(v, a, c, b):
    """Vectorised triangular function with apex ``c``."""
    v, a, c, b = np.broadcast_arrays(*(np.asarray(z, dtype=float) for z in (v, a, c, b)))
    rise = np.where(c > a, (v - a) / np.where(c > a, c - a, 1.0), 1.0)
    fall = np.where(b > c, (b - v) / np.where(b > c, b - c, 1.0), 1.0)
    return np.clip(np.where(v <= c, rise, fall), 0.0, 1.0)


def eval_triangular(t: TriangularFn, v: float) -> float:
    return t(v)


@dataclass(frozen=True)
class UtilityHypothesis:
    partials: tuple  # TriangularFn per numeric issue, tuple of floats per categorical issue
    weights: tuple[float, ...]

    def utility(self, domain: Domain, bid: Mapping[str, Any]) -> float:
        total = 0.0
        for iss, part, w in zip(domain.issues, self.partials, self.weights):
            v = bid[iss.key]
            if isinstance(iss, Categorical):
                total += w * part[iss.values_.index(v)]
            else:
                total += w * part(v)
        return total

    def to_json(self, domain: Domain) -> dict:
        parts = {}
        for iss, part, w in zip(domain.issues, self.partials, self.weights):
            shape = list(part) if isinstance(iss, Categorical) else part.to_json()
            parts[iss.key] = {"weight": w, "partial": shape}
        return parts


PEAK_FRACTIONS = (0.25, 0.5, 0.75)


class HypothesisSet:
    """Weighted utility hypotheses with a Bayesian posterior over them.

    Per-issue partial utilities are cached as arrays so that a batch of rows
    can be scored against every hypothesis at once; discrete issues use value
    tables.
    """

    def __init__(self, domain: Domain, hypotheses: Sequence[UtilityHypothesis],
                 posterior: np.ndarray | None = None, sigma: float = 0.25, beta: float = 0.01,
                 floor: float = 0.0):
        self.domain = domain
        self.hypotheses = list(hypotheses)
        h = len(self.hypotheses)
        if h == 0:
            raise ModelError("empty hypothesis set")
        self.posterior = np.full(h, 1.0 / h) if posterior is None else np.asarray(posterior, float)
        self.sigma, self.beta, self.floor = sigma, beta, floor
        self._compile()

    def _compile(self) -> None:
        self._tables: list[np.ndarray | None] = []  # (H, V) weighted partial values
        self._tri: list[tuple[np.ndarray, ...] | None] = []
        W = np.array([hyp.weights for hyp in self.hypotheses])  # (H, n)
        for j, iss in enumerate(self.domain.issues):
            parts = [hyp.partials[j] for hyp in self.hypotheses]
            if isinstance(iss, Categorical):
                self._tables.append(W[:, j, None] * np.array(parts, dtype=float))
                self._tri.append(None)
                continue
            a = np.array([p.a for p in parts])
            b = np.array([p.b for p in parts])
            c = np.array([p.apex for p in parts])
            if isinstance(iss, NumericDiscrete):
                vals = np.array(iss.values(), dtype=float)
                self._tables.append(W[:, j, None] * _tri(vals[None, :], a[:, None], c[:, None],
                                                         b[:, None]))
                self._tri.append(None)
            else:
                self._tables.append(None)
                self._tri.append((W[:, j], a, c, b))
        self._expected = None

    def _index(self, j: int, col: np.ndarray) -> np.ndarray:
        iss = self.domain.issues[j]
        idx = iss.index(col)
        return np.clip(idx, 0, iss.size - 1)

    def hypothesis_utilities(self, rows: np.ndarray) -> np.ndarray:
        """(m, H) utilities of each row under each hypothesis."""
        rows = np.atleast_2d(rows)
        out = np.zeros((len(rows), len(self.hypotheses)))
        for j in range(len(self.domain)):
            tab = self._tables[j]
            if tab is not None:
                out += tab[:, self._index(j, rows[:, j])].T
            else:
                w, a, c, b = self._tri[j]
                out += w[None, :] * _tri(rows[:, j, None], a[None, :], c[None, :], b[None, :])
        return out

    def expected_utility(self, rows: np.ndarray) -> np.ndarray:
        """Posterior-weighted utility per row.

        The mixture of additive hypotheses is itself additive, so discrete
        issues collapse to one value table per issue.
        """
        rows = np.atleast_2d(rows)
        if self._expected is None:
            self._expected = [None if tab is None else self.posterior @ tab for tab in self._tables]
        out = np.zeros(len(rows))
        for j in range(len(self.domain)):
            f = self._expected[j]
            if f is not None:
                out += f[self._index(j, rows[:, j])]
            else:
                w, a, c, b = self._tri[j]
                out += _tri(rows[:, j, None], a[None, :], c[None, :], b[None, :]) @ (self.posterior * w)
        return np.clip(out, 0.0, 1.0)

    def estimated_utility(self, bid: Mapping[str, Any]) -> float:
        return float(self.expected_utility(self.domain.encode(bid))[0])

    def target(self, turn: int) -> float:
        return max(1.0 - self.beta * turn, self.floor)

    def likelihoods(self, turn: int, row: np.ndarray) -> np.ndarray:
        resid = self.hypothesis_utilities(row)[0] - self.target(turn)
        return np.exp(-0.5 * (resid / self.sigma) ** 2) / (self.sigma * math.sqrt(2 * math.pi))

    def update_with_likelihoods(self, lik: np.ndarray) -> "HypothesisSet":
        post = self.posterior * lik
        z = post.sum()
        if not z > 0 or not np.isfinite(z):
            return self
        self.posterior = post / z
        self._expected = None
        return self

    def update(self, turn: int, bid: Mapping[str, Any]) -> "HypothesisSet":
        """Bayes step; ``turn`` counts the opponent's earlier bids (0 for its first)."""
        return self.update_with_likelihoods(self.likelihoods(turn, self.domain.encode(bid)))

    def top(self, k: int = 10) -> list[tuple[int, float]]:
        order = np.argsort(-self.posterior, kind="stable")[:k]
        return [(int(i), float(self.posterior[i])) for i in order]

    def dump_top(self, k: int = 10) -> str:
        return json.dumps([{"index": i, "weight": w, "issues": self.hypotheses[i].to_json(self.domain)}
                           for i, w in self.top(k)], sort_keys=True)


def rank_weights(n: int, rng: np.random.Generator) -> np.ndarray:
    """Weights proportional to rank over a random issue permutation, summing to 1."""
    ranks = rng.permutation(n) + 1
    return ranks / ranks.sum()


def generate_hypotheses(domain: Domain, count: int, rng: np.random.Generator,
                        **kwargs) -> HypothesisSet:
    if count < 1:
        raise ModelError("count must be >= 1")
    shapes = [(Shape.UP, None), (Shape.DOWN, None)] + [(Shape.PEAK, f) for f in PEAK_FRACTIONS]
    hyps = []
    for _ in range(count):
        parts = []
        for iss in domain.issues:
            if isinstance(iss, Categorical):
                tab = rng.random(iss.size)
                tab[rng.integers(iss.size)] = 1.0
                parts.append(tuple(float(x) for x in tab))
                continue
            shape, frac = shapes[int(rng.integers(len(shapes)))]
            c = None if frac is None else iss.lo + frac * (iss.hi - iss.lo)
            parts.append(TriangularFn(float(iss.lo), float(iss.hi), shape, c))
        weights = tuple(float(w) for w in rank_weights(len(domain), rng))
        hyps.append(UtilityHypothesis(tuple(parts), weights))
    return HypothesisSet(domain, hyps, **kwargs)


def bayes_update(hs: HypothesisSet, turn: int, bid: Mapping[str, Any]) -> HypothesisSet:
    return hs.update(turn, bid)


def estimated_opponent_utility(hs: HypothesisSet, bid: Mapping[str, Any]) -> float:
    return hs.estimated_utility(bid)


# ---------------------------------------------------------------------------
# Combined model, as seen by the search
# ---------------------------------------------------------------------------


class OpponentModel:
    """Strategy forecaster plus utility estimate plus modelled acceptance."""

    def __init__(self, domain: Domain, rng: np.random.Generator, hypotheses: int = 500,
                 family: str = "rqf", refit_every: int = 5, smoothing: float = 0.1,
                 sigma: float = 0.25, beta: float = 0.01, floor: float = 0.0):
        self.domain = domain
        self.strategy = StrategyModel(domain, family, refit_every, smoothing)
        self.utility = generate_hypotheses(domain, hypotheses, rng, sigma=sigma, beta=beta,
                                           floor=floor)

    @property
    def observations(self) -> int:
        return len(self.strategy)

    def observe(self, bid: Mapping[str, Any]) -> None:
        k = self.observations
        self.utility.update(k, bid)
        self.strategy.observe(k + 1, bid)

    def estimated_utility(self, rows: np.ndarray) -> np.ndarray:
        return self.utility.expected_utility(rows)

    def sample_bids(self, turn: int, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` forecast rows for opponent turn ``turn`` (1-based); uniform before any data."""
        if self.observations == 0:
            return self.domain.sample_rows(rng, n)
        return self.strategy.sample_rows(turn, rng, n)

    def accepts(self, incoming_row: np.ndarray, planned_row: np.ndarray) -> bool:
        u = self.estimated_utility(np.stack([incoming_row, planned_row]))
        return bool(u[0] >= u[1])


def modeled_accepts(model, incoming: Mapping[str, Any], planned: Mapping[str, Any]) -> bool:
    """Opponent accepts iff the incoming bid is at least as good for it as its own plan."""
    d = model.domain
    return model.accepts(d.encode(incoming), d.encode(planned))
