"""Negotiating agents: MCTS, Random Walker, Tit-for-Tat, Nice Tit-for-Tat.

Every agent is built from (domain, own profile, rng, config) and answers
``respond(history)``. None of them ever sees the opponent's profile.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Callable, Mapping

import numpy as np

from .domains import Bid, Domain, PreferenceProfile
from .mcts import SearchConfig, SearchResult, search
from .opponent import HypothesisSet, OpponentModel, generate_hypotheses
from .protocol import History, Message, player_to_move


def acceptance_decision(incoming: float, planned: float) -> bool:
    """Accept iff the offer on the table is at least as good as what we would propose."""
    return incoming >= planned


class BaseAgent:
    name = "base"

    def __init__(self, domain: Domain, profile: PreferenceProfile, rng: np.random.Generator):
        self.domain = domain
        self.profile = profile
        self.rng = rng
        self.util = profile.evaluator(domain)
        self.received: list[Bid] = []
        self.sent: list[Bid] = []

    def _sync(self, history: History) -> Bid | None:
        """Record opponent proposals not seen yet; return the latest one."""
        me = player_to_move(history)
        theirs = history.proposals_by(me.other)
        fresh = theirs[len(self.received):]
        for bid in fresh:
            self.received.append(bid)
            self.on_opponent_bid(bid)
        return theirs[-1] if theirs else None

    def on_opponent_bid(self, bid: Bid) -> None:
        pass

    def u(self, bid: Mapping[str, Any]) -> float:
        return self.util.one(self.domain.encode(bid))

    def best_of(self, samples: int) -> Bid:
        rows = self.domain.sample_rows(self.rng, samples)
        return self.domain.decode(rows[int(np.argmax(self.util(rows)))])

    def _answer(self, incoming: Bid | None, planned: Bid) -> Message:
        if incoming is not None and acceptance_decision(self.u(incoming), self.u(planned)):
            return Message.accept()
        self.sent.append(planned)
        return Message.propose(planned)

    def respond(self, history: History) -> Message:
        incoming = self._sync(history)
        return self._answer(incoming, self.plan(incoming))

    def plan(self, incoming: Bid | None) -> Bid:
        raise NotImplementedError


class RandomWalker(BaseAgent):
    name = "random-walker"

    def plan(self, incoming):
        return self.domain.decode(self.domain.sample_rows(self.rng, 1)[0])


class TitForTat(BaseAgent):
    """Mirrors the opponent's concessions, measured in its own utility."""

    name = "tit-for-tat"

    def __init__(self, domain, profile, rng, samples: int = 10_000):
        super().__init__(domain, profile, rng)
        self.samples = samples
        self.targets: list[float] = []

    def next_target(self) -> float:
        concession = self.u(self.received[-1]) - self.u(self.received[-2])
        return float(np.clip(self.u(self.sent[-1]) - concession, 0.0, 1.0))

    def plan(self, incoming):
        if len(self.received) < 2 or not self.sent:
            return self.best_of(self.samples)
        target = self.next_target()
        self.targets.append(target)
        rows = self.domain.sample_rows(self.rng, self.samples)
        i = int(np.argmin(np.abs(self.util(rows) - target)))
        return self.domain.decode(rows[i])


class NiceTitForTat(BaseAgent):
    """Concedes toward an estimated Nash point as far as the opponent has."""

    name = "nice-tit-for-tat"

    def __init__(self, domain, profile, rng, samples: int = 10_000, hypotheses: int = 500,
                 epsilon: float = 0.01, sigma: float = 0.25, beta: float = 0.01):
        super().__init__(domain, profile, rng)
        self.samples = samples
        self.epsilon = epsilon
        self.model: HypothesisSet = generate_hypotheses(domain, hypotheses, rng, sigma=sigma,
                                                        beta=beta)
        self.nash: np.ndarray | None = None

    def on_opponent_bid(self, bid):
        self.model.update(len(self.received) - 1, bid)

    def estimate_nash(self, rows: np.ndarray, own: np.ndarray) -> int:
        return int(np.argmax(own * self.model.expected_utility(rows)))

    def target(self, own_nash: float) -> float:
        first, last = self.u(self.received[0]), self.u(self.received[-1])
        frac = concession_fraction(first, last, own_nash)
        start = self.u(self.sent[0])
        return start + frac * (own_nash - start)

    def plan(self, incoming):
        if not self.received or not self.sent:
            return self.best_of(self.samples)
        rows = self.domain.sample_rows(self.rng, self.samples)
        own = self.util(rows)
        k = self.estimate_nash(rows, own)
        self.nash = rows[k]
        target = self.target(float(own[k]))
        return self.domain.decode(rows[pick_equivalent(own, self.model.expected_utility(rows),
                                                       target, self.epsilon)])


def concession_fraction(first: float, last: float, nash: float) -> float:
    """Share of the way from the opponent's first bid to the Nash point covered by its last.

    All three arguments are our own utilities. When the Nash point is no
    better for us than the opponent's opening, the opponent has nothing left
    to concede and the fraction is 1.
    """
    span = nash - first
    if span <= 0:
        return 1.0
    return float(np.clip((last - first) / span, 0.0, 1.0))


def pick_equivalent(own: np.ndarray, opp: np.ndarray, target: float, eps: float) -> int:
    """Among rows within ``eps`` of ``target`` take the best for the opponent; else the closest."""
    near = np.flatnonzero(np.abs(own - target) <= eps)
    if len(near):
        return int(near[np.argmax(opp[near])])
    return int(np.argmin(np.abs(own - target)))


class MctsAgent(BaseAgent):
    name = "mcts"

    def __init__(self, domain, profile, rng, simulations: int = 2000, alpha: float = 0.489,
                 c: float = 0.5, max_depth: int = 20, hypotheses: int = 500, kernel: str = "rqf",
                 refit_every: int = 5, retry_budget: int = 50, fallback_samples: int = 10_000,
                 on_search: Callable | None = None):
        super().__init__(domain, profile, rng)
        self.cfg = SearchConfig(alpha=alpha, c=c, simulations=simulations, max_depth=max_depth,
                                retry_budget=retry_budget)
        self.model = OpponentModel(domain, rng, hypotheses=hypotheses, family=kernel,
                                   refit_every=refit_every)
        self.fallback_samples = fallback_samples
        self.on_search = on_search
        self.last_search: SearchResult | None = None

    def on_opponent_bid(self, bid):
        self.model.observe(bid)

    def respond(self, history: History) -> Message:
        incoming = self._sync(history)
        cfg = replace(self.cfg, rollout_seed=int(self.rng.integers(2**63)))
        try:
            res = search(history, self.domain, self.profile, self.model, cfg)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            planned = self.best_of(self.fallback_samples)
        else:
            self.last_search = res
            if self.on_search is not None:
                self.on_search(len(history) + 1, res, self.model)
            planned = res.best_bid
        return self._answer(incoming, planned)


AGENTS: dict[str, type[BaseAgent]] = {
    "mcts": MctsAgent,
    "random-walker": RandomWalker,
    "tit-for-tat": TitForTat,
    "nice-tit-for-tat": NiceTitForTat,
}

# CLI namespaces for per-agent config keys, e.g. ``mcts.simulations``
NAMESPACES = {"mcts": "mcts", "random-walker": "rw", "tit-for-tat": "tft",
              "nice-tit-for-tat": "ntft"}


def agent_factory(name: str, **config) -> Callable[[Domain, PreferenceProfile, np.random.Generator], BaseAgent]:
    try:
        cls = AGENTS[name]
    except KeyError:
        raise ValueError(f"unknown agent {name!r}; choose from {', '.join(AGENTS)}") from None

    def make(domain, profile, rng):
        return cls(domain, profile, rng, **config)

    make.agent_name = name
    return make
