"""Alternating-offers bargaining as an extensive game, and the session engine."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol

import numpy as np

from .domains import Bid, Domain, DomainError, PreferenceProfile


class ProtocolError(RuntimeError):
    """Illegal move in the game: acting on a terminal history, bad message shape."""


class InvalidBidError(ProtocolError):
    def __init__(self, agent: str, reason: str):
        super().__init__(f"agent {agent!r} proposed an invalid bid: {reason}")
        self.agent = agent


class SpeechAct(enum.Enum):
    PROPOSE = "propose"
    ACCEPT = "accept"
    REJECT = "reject"


class Player(enum.IntEnum):
    P1 = 1  # buyer, moves first
    P2 = 2  # seller

    @property
    def other(self) -> "Player":
        return Player.P2 if self is Player.P1 else Player.P1


class Status(enum.Enum):
    OPEN = "open"
    AGREED = "agreed"
    FAILED = "failed"


class Terminal(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    ROUND_CAP = "round-cap"


@dataclass(frozen=True)
class Message:
    act: SpeechAct
    content: Bid | None = None

    def __post_init__(self):
        if (self.act is SpeechAct.PROPOSE) != (self.content is not None):
            raise ProtocolError("a message carries a bid iff it is a proposal")

    @classmethod
    def propose(cls, bid: Bid) -> "Message":
        return cls(SpeechAct.PROPOSE, bid if isinstance(bid, Bid) else Bid(bid))

    @classmethod
    def accept(cls) -> "Message":
        return cls(SpeechAct.ACCEPT)

    @classmethod
    def reject(cls) -> "Message":
        return cls(SpeechAct.REJECT)


@dataclass
class History:
    messages: list[Message] = field(default_factory=list)
    status: Status = Status.OPEN

    def __len__(self) -> int:
        return len(self.messages)

    def append(self, msg: Message) -> None:
        if self.status is not Status.OPEN:
            raise ProtocolError("history is terminal")
        if msg.act is not SpeechAct.PROPOSE and not self.messages:
            raise ProtocolError("nothing to accept or reject yet")
        self.messages.append(msg)
        if msg.act is SpeechAct.ACCEPT:
            self.status = Status.AGREED
        elif msg.act is SpeechAct.REJECT:
            self.status = Status.FAILED

    def fail(self) -> None:
        """Close the history without a final message (round cap)."""
        if self.status is not Status.OPEN:
            raise ProtocolError("history is terminal")
        self.status = Status.FAILED

    def last_offer(self) -> Bid | None:
        for msg in reversed(self.messages):
            if msg.act is SpeechAct.PROPOSE:
                return msg.content
        return None

    def proposals_by(self, player: Player) -> list[Bid]:
        """Bids proposed by ``player``; P1 owns even positions, P2 odd ones."""
        start = 0 if player is Player.P1 else 1
        return [m.content for m in self.messages[start::2] if m.act is SpeechAct.PROPOSE]

    @property
    def rounds(self) -> int:
        return sum(1 for m in self.messages if m.act is SpeechAct.PROPOSE)

    def transcript(self) -> list[str]:
        """``turn,player,act,bid-json`` per message, turns counted from 1."""
        lines = []
        for i, m in enumerate(self.messages):
            bid = m.content.canonical_json() if m.content is not None else ""
            lines.append(f"{i + 1},{int(_parity_player(i))},{m.act.value},{bid}")
        return lines


def _parity_player(size: int) -> Player:
    return Player.P1 if size % 2 == 0 else Player.P2


def player_to_move(h: History) -> Player:
    """P1 on even history length, P2 on odd: the buyer always opens."""
    if h.status is not Status.OPEN:
        raise ProtocolError("no player moves in a terminal history")
    return _parity_player(len(h))


class Negotiator(Protocol):
    name: str

    def respond(self, history: History) -> Message: ...


# An agent factory never sees the opponent's profile.
AgentFactory = Callable[[Domain, PreferenceProfile, np.random.Generator], Negotiator]


@dataclass
class SessionResult:
    outcome: Bid | None
    utilities: tuple[float, float]
    rounds: int
    terminal: Terminal
    history: History


def agent_rngs(seed: int, n: int = 2) -> list[np.random.Generator]:
    """Independent per-agent streams derived from one session seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def run_session(agent_a: AgentFactory, agent_b: AgentFactory, domain: Domain,
                profiles: Iterable[PreferenceProfile], round_cap: int, seed: int) -> SessionResult:
    """Play one alternating-offers session; ``agent_a`` is P1 and opens.

    The session fails with ``Terminal.ROUND_CAP`` once ``round_cap`` proposals
    have been made without acceptance.
    """
    if round_cap < 1:
        raise ValueError("round_cap must be >= 1")
    pa, pb = tuple(profiles)
    ra, rb = agent_rngs(seed)
    agents = {Player.P1: agent_a(domain, pa, ra), Player.P2: agent_b(domain, pb, rb)}
    h = History()
    terminal = None
    while terminal is None:
        who = player_to_move(h)
        msg = agents[who].respond(h)
        if not isinstance(msg, Message):
            raise ProtocolError(f"agent {who.name} returned {msg!r}, not a Message")
        if msg.act is SpeechAct.PROPOSE:
            try:
                domain.validate(msg.content)
            except DomainError as e:
                raise InvalidBidError(getattr(agents[who], "name", who.name), str(e)) from None
        h.append(msg)
        if msg.act is SpeechAct.ACCEPT:
            terminal = Terminal.ACCEPT
        elif msg.act is SpeechAct.REJECT:
            terminal = Terminal.REJECT
        elif h.rounds >= round_cap:
            h.fail()
            terminal = Terminal.ROUND_CAP

    if terminal is Terminal.ACCEPT:
        outcome = h.last_offer()
        utils = (pa.utility(outcome), pb.utility(outcome))
    else:
        outcome = None
        utils = (pa.reserve, pb.reserve)
    return SessionResult(outcome, utils, h.rounds, terminal, h)
