"""MCTS bidding strategy with progressive widening and two-sided scores.

Nodes alternate between our proposals and the opponent's counter-proposals.
Each node keeps cumulative scores for both sides. Selection at a node
reads the score of the side that moves there. Our utility comes from our
true profile; the opponent's comes from the estimated utility model.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .domains import Bid, Domain, PreferenceProfile
from .protocol import History, Player, player_to_move


class OpponentView(Protocol):
    def estimated_utility(self, rows: np.ndarray) -> np.ndarray: ...

    def sample_bids(self, turn: int, rng: np.random.Generator, n: int) -> np.ndarray: ...


@dataclass(frozen=True)
class SearchConfig:
    alpha: float = 0.489
    c: float = 0.5
    simulations: int = 2000
    max_depth: int = 20
    rollout_seed: int = 0
    retry_budget: int = 50
    batch: int = 256

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.c <= 0:
            raise ValueError("C must be positive")
        if self.simulations < 1 or self.max_depth < 1:
            raise ValueError("simulations and max_depth must be >= 1")


@dataclass
class SearchResult:
    best_bid: Bid
    best_row: np.ndarray
    root_visits: int
    tree_size: int
    value_estimate: float
    fallback: bool = False
    elapsed_ms: float = 0.0
    root: "Node | None" = None


def should_expand(n_p: int, n_c: int, alpha: float) -> bool:
    """Progressive widening: open a new child iff n_p**alpha >= n_c."""
    return n_p**alpha >= n_c


def selection_score(s_i: float, n_i: int, n: int, alpha: float, c: float) -> float:
    return s_i / (n_i + 1) + c * n**alpha * math.sqrt(math.log(n) / (n_i + 1))


def pruned_expand(candidate_utility: float, best_received_utility: float) -> bool:
    """Keep a candidate own bid unless it is worse for us than the best offer received."""
    return not candidate_utility < best_received_utility


class Node:
    __slots__ = ("row", "key", "u_self", "u_opp", "own", "children", "keys", "visits",
                 "s_self", "s_opp", "parent")

    def __init__(self, row, key, u_self, u_opp, own, parent=None):
        self.row = row
        self.key = key
        self.u_self = u_self
        self.u_opp = u_opp
        self.own = own  # True when this node is a proposal of ours
        self.parent = parent
        self.children: list[Node] = []
        self.keys: dict[bytes, Node] = {}
        self.visits = 0
        self.s_self = 0.0
        self.s_opp = 0.0

    def add(self, child: "Node") -> "Node":
        self.children.append(child)
        self.keys[child.key] = child
        return child

    def iter_nodes(self):
        stack = [self]
        while stack:
            nd = stack.pop()
            yield nd
            stack.extend(nd.children)


class _Stream:
    """Batched draws of candidate rows with both utilities precomputed."""

    def __init__(self, draw, u_self, u_opp, batch):
        self._draw, self._u_self, self._u_opp, self._batch = draw, u_self, u_opp, batch
        self._items: list[tuple] = []
        self._pos = 0

    def next(self) -> tuple:
        if self._pos >= len(self._items):
            rows = self._draw(self._batch)
            us = self._u_self(rows).tolist()
            uo = self._u_opp(rows).tolist()
            self._items = [(rows[i], rows[i].tobytes(), us[i], uo[i]) for i in range(len(rows))]
            self._pos = 0
        item = self._items[self._pos]
        self._pos += 1
        return item


class _Search:
    def __init__(self, domain: Domain, profile: PreferenceProfile, model: OpponentView,
                 cfg: SearchConfig, opp_bids: list[np.ndarray]):
        self.domain = domain
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.rollout_seed)
        self.own_u = profile.evaluator(domain)
        self.model = model
        self.reserve = (profile.reserve, 0.0)
        self.opp_turn0 = len(opp_bids)
        self.best_received = None
        self.bound = 0.0
        if opp_bids:
            rows = np.stack(opp_bids)
            us = self.own_u(rows)
            i = int(np.argmax(us))
            self.bound = float(us[i])
            self.best_received = (rows[i], rows[i].tobytes(), self.bound,
                                  float(model.estimated_utility(rows[i:i + 1])[0]))
        self.own_stream = _Stream(lambda n: domain.sample_rows(self.rng, n), self.own_u,
                                  model.estimated_utility, cfg.batch)
        self.opp_streams: dict[int, _Stream] = {}
        self.root = Node(None, b"", 0.0, 0.0, own=False)

    def opp_next(self, turn: int) -> tuple:
        turn = min(turn, self.opp_turn0 + self.cfg.max_depth)
        st = self.opp_streams.get(turn)
        if st is None:
            st = self.opp_streams[turn] = _Stream(
                lambda n, t=turn: self.model.sample_bids(t, self.rng, n), self.own_u,
                self.model.estimated_utility, max(16, self.cfg.batch // 4))
        return st.next()

    def own_candidate(self, taken: dict | None = None) -> tuple | None:
        """Uniform own bid passing the pruning bound, skipping siblings' bids."""
        for _ in range(self.cfg.retry_budget + 1):
            item = self.own_stream.next()
            if item[2] < self.bound:
                continue
            if taken is not None and item[1] in taken:
                continue
            return item
        return None

    def select(self, node: Node, self_moves: bool) -> Node:
        n = self.root.visits
        coef = self.cfg.c * n**self.cfg.alpha * math.sqrt(math.log(n))
        best, best_w = None, -math.inf
        for ch in node.children:
            inv = 1.0 / (ch.visits + 1)
            w = (ch.s_self if self_moves else ch.s_opp) * inv + coef * math.sqrt(inv)
            if w > best_w:
                best, best_w = ch, w
        return best

    def rollout(self, standing: tuple, counter: tuple | None, depth: int,
                opp_turn: int) -> tuple[float, float]:
        """Play out from a leaf: our standing offer against forecast opponent bids.

        Each opponent turn first checks modelled acceptance of ``standing``,
        then the forecast bid becomes its counter, which we accept iff it is
        at least as good for us as ``standing``.
        """
        max_depth = self.cfg.max_depth
        if counter is not None:
            if counter[2] >= standing[2]:
                return counter[2], counter[3]
            depth += 1
            if depth > max_depth:
                return self.reserve
        while True:
            opp_turn += 1
            planned = self.opp_next(opp_turn)
            if planned[3] <= standing[3]:
                return standing[2], standing[3]
            depth += 1
            if depth > max_depth:
                return self.reserve
            if planned[2] >= standing[2]:
                return planned[2], planned[3]
            depth += 1
            if depth > max_depth:
                return self.reserve

    def iterate(self) -> None:
        cfg = self.cfg
        root = self.root
        root.visits += 1
        path = [root]
        node = root
        depth = 0
        opp_turn = self.opp_turn0
        while True:
            if node.own:
                # opponent to move: modelled acceptance first, then its counter-bid
                opp_turn += 1
                planned = self.opp_next(opp_turn)
                if planned[3] <= node.u_opp:
                    result = (node.u_self, node.u_opp)
                    break
                depth += 1
                if depth > cfg.max_depth:
                    result = self.reserve
                    break
                if should_expand(node.visits, len(node.children), cfg.alpha):
                    child = node.keys.get(planned[1])
                    if child is None:
                        child = node.add(Node(planned[0], planned[1], planned[2], planned[3],
                                              own=False, parent=node))
                        child.visits += 1
                        path.append(child)
                        result = self.rollout(_item(node), planned, depth, opp_turn)
                        break
                else:
                    child = self.select(node, self_moves=False)
                child.visits += 1
                path.append(child)
                node = child
            else:
                depth += 1
                if depth > cfg.max_depth:
                    result = self.reserve
                    break
                fresh = None
                child = None
                if should_expand(node.visits, len(node.children), cfg.alpha):
                    fresh = self.own_candidate(node.keys)
                if fresh is None:
                    if node.children:
                        child = self.select(node, self_moves=True)
                    elif node is root:
                        result = self.reserve
                        break
                    else:
                        result = self.rollout(_item(node.parent), _item(node), depth - 1,
                                              opp_turn)
                        break
                planned_u = fresh[2] if fresh is not None else child.u_self
                # our own acceptance strategy on the counter-bid (never at the root)
                if node is not root and node.u_self >= planned_u:
                    result = (node.u_self, node.u_opp)
                    break
                if fresh is not None:
                    child = node.add(Node(fresh[0], fresh[1], fresh[2], fresh[3], own=True,
                                          parent=node))
                    child.visits += 1
                    path.append(child)
                    result = self.rollout(fresh, None, depth, opp_turn)
                    break
                child.visits += 1
                path.append(child)
                node = child
        us, uo = result
        for nd in path:
            nd.s_self += us
            nd.s_opp += uo


def _item(node: Node) -> tuple:
    return node.row, node.key, node.u_self, node.u_opp


def _opponent_rows(history: History, domain: Domain) -> list[np.ndarray]:
    me = player_to_move(history)
    return [domain.encode(b) for b in history.proposals_by(me.other)]


def search(history: History, domain: Domain, profile: PreferenceProfile, model: OpponentView,
           cfg: SearchConfig = SearchConfig()) -> SearchResult:
    """Run ``cfg.simulations`` MCTS iterations for the player to move in ``history``."""
    t0 = time.perf_counter()
    s = _Search(domain, profile, model, cfg, _opponent_rows(history, domain))
    for _ in range(cfg.simulations):
        s.iterate()
    root = s.root
    elapsed = (time.perf_counter() - t0) * 1000.0
    size = sum(1 for _ in root.iter_nodes())
    if not root.children:
        # everything was pruned: fall back to the best offer received so far
        if s.best_received is not None:
            row = s.best_received[0]
        else:
            rows = domain.sample_rows(s.rng, 10_000)
            row = rows[int(np.argmax(s.own_u(rows)))]
        return SearchResult(domain.decode(row), row, root.visits, size, float(s.own_u.one(row)),
                            fallback=True, elapsed_ms=elapsed, root=root)
    best = max(root.children, key=lambda ch: ch.s_self / (ch.visits + 1))
    return SearchResult(domain.decode(best.row), best.row, root.visits, size,
                        best.s_self / best.visits, elapsed_ms=elapsed, root=root)
