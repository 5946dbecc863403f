"""Negotiation domains: issues, bids, constraint-based preference profiles.

Bids are exposed as immutable mappings (``Bid``) but every hot path works on
*encoded rows*: float vectors in issue order where numeric issues hold their
value and categorical issues hold the index of their value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp


class DomainError(ValueError):
    """Raised for malformed issues, bids, profiles or domain files."""


# ---------------------------------------------------------------------------
# Issues
# ---------------------------------------------------------------------------


def _num(x: float) -> int | float:
    """Return ``x`` as an int when it is integral, for readable bids and JSON."""
    xf = float(x)
    if xf.is_integer():
        return int(xf)
    return xf


@dataclass(frozen=True)
class NumericDiscrete:
    key: str
    lo: float
    hi: float
    step: float = 1

    kind = "discrete"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"issue {self.key!r}: lo must be < hi")
        if not self.step > 0:
            raise DomainError(f"issue {self.key!r}: step must be > 0")

    @property
    def size(self) -> int:
        return int(math.floor((self.hi - self.lo) / self.step + 1e-9)) + 1

    def values(self) -> list[int | float]:
        return [_num(self.lo + k * self.step) for k in range(self.size)]

    def contains(self, v: Any) -> bool:
        if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
            return False
        k = (float(v) - self.lo) / self.step
        return -1e-9 <= k <= self.size - 1 + 1e-9 and abs(k - round(k)) < 1e-9

    def encode(self, v: Any) -> float:
        return float(v)

    def decode(self, x: float) -> int | float:
        k = int(round((float(x) - self.lo) / self.step))
        return _num(self.lo + k * self.step)

    def index(self, x: np.ndarray) -> np.ndarray:
        return np.rint((np.asarray(x, dtype=float) - self.lo) / self.step).astype(np.intp)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lo + rng.integers(0, self.size, size=n) * self.step

    def snap(self, x: np.ndarray) -> np.ndarray:
        """Clamp to the range and round to the nearest step."""
        k = np.clip(np.rint((np.asarray(x, dtype=float) - self.lo) / self.step), 0, self.size - 1)
        return self.lo + k * self.step

    def to_json(self) -> dict:
        return {"key": self.key, "kind": self.kind, "lo": _num(self.lo), "hi": _num(self.hi),
                "step": _num(self.step)}


@dataclass(frozen=True)
class NumericContinuous:
    key: str
    lo: float
    hi: float

    kind = "continuous"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"issue {self.key!r}: lo must be < hi")

    size = math.inf

    def contains(self, v: Any) -> bool:
        if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
            return False
        return self.lo <= float(v) <= self.hi

    def encode(self, v: Any) -> float:
        return float(v)

    def decode(self, x: float) -> float:
        return float(x)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=n)

    def snap(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def to_json(self) -> dict:
        return {"key": self.key, "kind": self.kind, "lo": _num(self.lo), "hi": _num(self.hi)}


@dataclass(frozen=True)
class Categorical:
    key: str
    values_: tuple

    kind = "categorical"

    def __post_init__(self):
        object.__setattr__(self, "values_", tuple(self.values_))
        if not self.values_:
            raise DomainError(f"issue {self.key!r}: categorical list is empty")
        if len(set(self.values_)) != len(self.values_):
            raise DomainError(f"issue {self.key!r}: categorical values must be distinct")

    @property
    def size(self) -> int:
        return len(self.values_)

    def values(self) -> list:
        return list(self.values_)

    def contains(self, v: Any) -> bool:
        return v in self.values_

    def encode(self, v: Any) -> float:
        return float(self.values_.index(v))

    def decode(self, x: float) -> Any:
        return self.values_[int(round(float(x)))]

    def index(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x).astype(np.intp)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.integers(0, len(self.values_), size=n).astype(float)

    def snap(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.rint(np.asarray(x, dtype=float)), 0, len(self.values_) - 1)

    def to_json(self) -> dict:
        return {"key": self.key, "kind": self.kind, "values": list(self.values_)}


Issue = NumericDiscrete | NumericContinuous | Categorical


def issue_from_json(d: Mapping) -> Issue:
    kind = d.get("kind")
    try:
        if kind == "discrete":
            return NumericDiscrete(d["key"], d["lo"], d["hi"], d.get("step", 1))
        if kind == "continuous":
            return NumericContinuous(d["key"], d["lo"], d["hi"])
        if kind == "categorical":
            return Categorical(d["key"], tuple(d["values"]))
    except KeyError as e:
        raise DomainError(f"issue missing field {e}") from None
    raise DomainError(f"unknown issue kind {kind!r}")


# ---------------------------------------------------------------------------
# Bids and domains
# ---------------------------------------------------------------------------


class Bid(Mapping[str, Any]):
    """Immutable assignment of one value per issue key."""

    __slots__ = ("_d", "_hash")

    def __init__(self, values: Mapping[str, Any] | Sequence[tuple[str, Any]] = ()):
        self._d = dict(values)
        self._hash = None

    def __getitem__(self, key: str) -> Any:
        return self._d[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Mapping):
            return self._d == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"Bid({self._d!r})"

    def canonical_json(self) -> str:
        return json.dumps(self._d, sort_keys=True, separators=(",", ":"))


class Domain:
    """An ordered list of issues."""

    def __init__(self, issues: Sequence[Issue]):
        self.issues = tuple(issues)
        keys = [i.key for i in self.issues]
        if not keys:
            raise DomainError("domain has no issues")
        if len(set(keys)) != len(keys):
            raise DomainError("duplicate issue keys")
        self.keys = tuple(keys)
        self._pos = {k: i for i, k in enumerate(keys)}

    def __len__(self) -> int:
        return len(self.issues)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Domain) and self.issues == other.issues

    def position(self, key: str) -> int:
        return self._pos[key]

    def issue(self, key: str) -> Issue:
        return self.issues[self._pos[key]]

    @property
    def size(self) -> float:
        """Number of distinct bids (``inf`` with a continuous issue)."""
        total = 1
        for iss in self.issues:
            if iss.size == math.inf:
                return math.inf
            total *= iss.size
        return total

    def validate(self, bid: Mapping[str, Any]) -> None:
        if set(bid) != set(self.keys):
            missing = set(self.keys) - set(bid)
            extra = set(bid) - set(self.keys)
            raise DomainError(f"bid keys mismatch (missing={sorted(missing)}, extra={sorted(extra)})")
        for iss in self.issues:
            if not iss.contains(bid[iss.key]):
                raise DomainError(f"value {bid[iss.key]!r} outside issue {iss.key!r}")

    def is_valid(self, bid: Mapping[str, Any]) -> bool:
        try:
            self.validate(bid)
        except DomainError:
            return False
        return True

    def encode(self, bid: Mapping[str, Any]) -> np.ndarray:
        self.validate(bid)
        return np.array([iss.encode(bid[iss.key]) for iss in self.issues], dtype=float)

    def decode(self, row: Sequence[float]) -> Bid:
        return Bid({iss.key: iss.decode(x) for iss, x in zip(self.issues, row)})

    def sample_rows(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty((n, len(self.issues)))
        for j, iss in enumerate(self.issues):
            out[:, j] = iss.sample(rng, n)
        return out

    def to_json(self) -> list[dict]:
        return [iss.to_json() for iss in self.issues]


def sample_random_bid(domain: Domain, rng: np.random.Generator) -> Bid:
    """Uniform draw from the bid space (per-issue uniform)."""
    return domain.decode(domain.sample_rows(rng, 1)[0])


# ---------------------------------------------------------------------------
# Preference profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RangeClause:
    key: str
    min: float
    max: float

    def satisfied(self, v: Any) -> bool:
        return self.min <= v <= self.max

    def to_json(self) -> dict:
        return {"key": self.key, "min": _num(self.min), "max": _num(self.max)}


@dataclass(frozen=True)
class SetClause:
    key: str
    allowed: frozenset

    def satisfied(self, v: Any) -> bool:
        return v in self.allowed

    def to_json(self) -> dict:
        return {"key": self.key, "allowed": sorted(self.allowed, key=str)}


Clause = RangeClause | SetClause


@dataclass(frozen=True)
class Constraint:
    clauses: tuple[Clause, ...]
    weight: float

    def satisfied(self, bid: Mapping[str, Any]) -> bool:
        return all(c.satisfied(bid[c.key]) for c in self.clauses)

    def to_json(self) -> dict:
        return {"clauses": [c.to_json() for c in self.clauses], "weight": _num(self.weight)}


@dataclass(frozen=True)
class PreferenceProfile:
    """Sum of weights of satisfied hyper-rectangle constraints, normalised."""

    constraints: tuple[Constraint, ...]
    normalizer: float
    reserve: float = 0.0
    _compiled: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.normalizer > 0:
            raise DomainError("normalizer must be positive")
        if not 0.0 <= self.reserve <= 1.0:
            raise DomainError("reserve must be in [0, 1]")
        for c in self.constraints:
            if not c.weight > 0:
                raise DomainError("constraint weights must be positive")

    def keys(self) -> set[str]:
        return {cl.key for c in self.constraints for cl in c.clauses}

    def total_weight(self) -> float:
        return float(sum(c.weight for c in self.constraints))

    def utility(self, bid: Mapping[str, Any]) -> float:
        missing = self.keys() - set(bid)
        if missing:
            raise DomainError(f"bid missing issues {sorted(missing)}")
        s = sum(c.weight for c in self.constraints if c.satisfied(bid))
        return min(1.0, s / self.normalizer)

    def evaluator(self, domain: Domain) -> "ProfileEvaluator":
        ev = self._compiled.get(id(domain))
        if ev is None or ev.domain is not domain:
            ev = ProfileEvaluator(domain, self)
            self._compiled[id(domain)] = ev
        return ev

    def to_json(self) -> dict:
        return {"reserve": _num(self.reserve),
                "constraints": [c.to_json() for c in self.constraints],
                "normalizer": _num(self.normalizer)}

    @classmethod
    def from_json(cls, d: Mapping) -> "PreferenceProfile":
        cons = []
        try:
            for c in d["constraints"]:
                clauses = []
                for cl in c["clauses"]:
                    if "allowed" in cl:
                        clauses.append(SetClause(cl["key"], frozenset(cl["allowed"])))
                    else:
                        clauses.append(RangeClause(cl["key"], cl["min"], cl["max"]))
                cons.append(Constraint(tuple(clauses), c["weight"]))
            return cls(tuple(cons), d["normalizer"], d.get("reserve", 0.0))
        except KeyError as e:
            raise DomainError(f"profile missing field {e}") from None


def utility(profile: PreferenceProfile, bid: Mapping[str, Any]) -> float:
    return profile.utility(bid)


class ProfileEvaluator:
    """Vectorised utility over encoded rows for one (domain, profile) pair."""

    def __init__(self, domain: Domain, profile: PreferenceProfile):
        self.domain = domain
        self.profile = profile
        n, c = len(domain), len(profile.constraints)
        lo = np.full((c, n), -np.inf)
        hi = np.full((c, n), np.inf)
        self._cat: list[tuple[int, np.ndarray]] = []
        cat_tables: dict[int, np.ndarray] = {}
        for ci, con in enumerate(profile.constraints):
            for cl in con.clauses:
                j = domain.position(cl.key)
                iss = domain.issues[j]
                if isinstance(cl, SetClause):
                    if not isinstance(iss, Categorical):
                        raise DomainError(f"set clause on non-categorical issue {cl.key!r}")
                    tab = cat_tables.setdefault(j, np.ones((c, iss.size), dtype=bool))
                    tab[ci] = [v in cl.allowed for v in iss.values_]
                else:
                    lo[ci, j] = max(lo[ci, j], cl.min)
                    hi[ci, j] = min(hi[ci, j], cl.max)
        # only issues that some range clause touches need the bound check
        used = np.any(np.isfinite(lo) | np.isfinite(hi), axis=0)
        self._cols = np.flatnonzero(used)
        self._lo = lo[:, self._cols]
        self._hi = hi[:, self._cols]
        self._cat = sorted(cat_tables.items())
        self._w = np.array([con.weight for con in profile.constraints], dtype=float)
        self._norm = float(profile.normalizer)

    def __call__(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        x = rows[:, None, self._cols]
        sat = np.all((x >= self._lo) & (x <= self._hi), axis=2)
        for j, tab in self._cat:
            sat &= tab[:, rows[:, j].astype(np.intp)].T
        return np.minimum(sat @ self._w / self._norm, 1.0)

    def one(self, row: np.ndarray) -> float:
        return float(self(row)[0])


# ---------------------------------------------------------------------------
# Domain specs and the benchmark generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    domain: Domain
    profiles: tuple[PreferenceProfile, PreferenceProfile]

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if len(self.profiles) != 2:
            raise DomainError("a domain spec carries exactly two profiles")
        for p in self.profiles:
            unknown = p.keys() - set(self.domain.keys)
            if unknown:
                raise DomainError(f"profile references undeclared issues {sorted(unknown)}")

    def to_json(self) -> dict:
        return {"issues": self.domain.to_json(), "profiles": [p.to_json() for p in self.profiles]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_json(cls, d: Mapping) -> "DomainSpec":
        try:
            domain = Domain([issue_from_json(i) for i in d["issues"]])
            profiles = tuple(PreferenceProfile.from_json(p) for p in d["profiles"])
        except (KeyError, TypeError) as e:
            raise DomainError(f"malformed domain document: {e}") from None
        return cls(domain, profiles)

    @classmethod
    def load(cls, path: str | Path) -> "DomainSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise DomainError(f"cannot read domain file {path}: {e}") from None
        return cls.from_json(doc)


def _candidate_values(domain: Domain, profile: PreferenceProfile) -> list[list[Any]]:
    """Per-issue values sufficient to reach the maximum weight sum."""
    out = []
    for iss in domain.issues:
        if isinstance(iss, NumericContinuous):
            pts = {iss.lo}
            for con in profile.constraints:
                for cl in con.clauses:
                    if cl.key == iss.key:
                        pts.update(v for v in (cl.min, cl.max) if iss.lo <= v <= iss.hi)
            out.append(sorted(pts))
        else:
            out.append(iss.values())
    return out


def max_weight_bid(domain: Domain, profile: PreferenceProfile) -> tuple[Bid, float]:
    """Exact maximiser of the satisfied-weight sum, solved as a small MILP.

    One-hot variables pick a value per issue; a constraint indicator may only
    be 1 if each of its clauses admits the picked value.  Continuous issues
    only need the clause endpoints as candidates because every clause interval
    is closed.
    """
    cons = profile.constraints
    cand = _candidate_values(domain, profile)
    offsets = np.cumsum([0] + [len(v) for v in cand])
    nx, nc = int(offsets[-1]), len(cons)
    c = np.concatenate([np.zeros(nx), -np.array([con.weight for con in cons], dtype=float)])
    rows, lb, ub = [], [], []
    for i, vals in enumerate(cand):
        r = np.zeros(nx + nc)
        r[offsets[i]:offsets[i + 1]] = 1
        rows.append(r)
        lb.append(1)
        ub.append(1)
    for ci, con in enumerate(cons):
        for cl in con.clauses:
            i = domain.position(cl.key)
            r = np.zeros(nx + nc)
            r[nx + ci] = 1
            for k, v in enumerate(cand[i]):
                if cl.satisfied(v):
                    r[offsets[i] + k] = -1
            rows.append(r)
            lb.append(-np.inf)
            ub.append(0)
    res = milp(c, constraints=LinearConstraint(np.array(rows), lb, ub),
               integrality=np.ones(nx + nc), bounds=Bounds(0, 1))
    if res.status != 0:
        raise DomainError(f"utility maximisation failed: {res.message}")
    x = np.rint(res.x).astype(int)
    values = {}
    for i, iss in enumerate(domain.issues):
        k = int(np.argmax(x[offsets[i]:offsets[i + 1]]))
        values[iss.key] = cand[i][k]
    bid = Bid(values)
    # recompute from the bid so the certificate does not rely on solver tolerances
    top = float(sum(con.weight for con in cons if con.satisfied(bid)))
    return bid, top


def nonlinearity_witness(domain: Domain, profile: PreferenceProfile, rng: np.random.Generator,
                         tries: int = 20000):
    """Four bids a, b, c, d differing on two issues with u(a)+u(d) != u(b)+u(c).

    ``a`` and ``d`` differ on both issues, ``b``/``c`` swap one each.  Returns
    None when no witness turned up (an additive profile never yields one).
    """
    ev = profile.evaluator(domain)
    n = len(domain)
    if n < 2:
        return None
    for _ in range(tries):
        base = domain.sample_rows(rng, 2)
        i, j = rng.choice(n, size=2, replace=False)
        a = base[0].copy()
        d = a.copy()
        d[i], d[j] = base[1, i], base[1, j]
        b = a.copy()
        b[i] = d[i]
        c = a.copy()
        c[j] = d[j]
        u = ev(np.stack([a, b, c, d]))
        if abs(u[0] + u[3] - u[1] - u[2]) > 1e-9:
            return tuple(domain.decode(r) for r in (a, b, c, d))
    return None


def _random_constraints(rng: np.random.Generator, domain: Domain, count: int,
                        half_widths: Sequence[int], tilt: np.ndarray, max_arity: int = 3,
                        skew: float = 3.0) -> list[Constraint]:
    """Random weighted hyper-rectangles over 1..``max_arity`` issues.

    ``tilt[j]`` is -1 or +1 and pulls rectangle centres on issue ``j`` toward
    its low or high end (Beta(1, ``skew``) placement).
    """
    keys = domain.keys
    out = []
    for _ in range(count):
        arity = int(rng.integers(1, min(max_arity, len(keys)) + 1))
        chosen = sorted(rng.choice(len(keys), size=arity, replace=False))
        clauses = []
        for j in chosen:
            vals = domain.issues[j].values()
            x = rng.beta(1.0, skew)
            if tilt[j] > 0:
                x = 1.0 - x
            centre = int(round(x * (len(vals) - 1)))
            hw = int(rng.choice(half_widths))
            lo_k, hi_k = max(0, centre - hw), min(len(vals) - 1, centre + hw)
            clauses.append(RangeClause(domain.issues[j].key, vals[lo_k], vals[hi_k]))
        # skewed weights: a few heavy constraints shape the top of the utility range
        weight = int(math.ceil(100 * rng.random() ** 4))
        out.append(Constraint(tuple(clauses), weight))
    return out


def generate_benchmark_domain(seed: int, issue_count: int = 10, constraints: int = 50,
                              opposed: float = 0.6) -> DomainSpec:
    """Benchmark domain: ``issue_count`` issues valued 1..10 and two nonlinear profiles.

    Each profile is a bag of ``constraints`` weighted hyper-rectangles over
    1 to 3 issues with skewed integer weights in 1..100. Each issue pulls the
    two profiles toward opposite ends with probability ``opposed`` and toward
    the same end otherwise; profile 2 gets wider rectangles so it is easier
    to satisfy.
    The normaliser of each profile is the exact maximum weight sum, so the
    utility of the certified best bid is 1.0.
    """
    if issue_count < 1:
        raise DomainError("issue_count must be >= 1")
    rng = np.random.default_rng(seed)
    width = len(str(issue_count - 1))
    domain = Domain([NumericDiscrete(f"i{k:0{width}d}", 1, 10, 1) for k in range(issue_count)])
    # mostly opposed interests, like a buyer and a seller
    tilt1 = rng.choice([-1, 1], size=issue_count)
    tilt2 = np.where(rng.random(issue_count) < opposed, -tilt1, tilt1)
    profiles = []
    for half_widths, tilt in (((2, 3, 4), tilt1), ((3, 4, 5), tilt2)):
        while True:
            cons = _random_constraints(rng, domain, constraints, half_widths, tilt)
            draft = PreferenceProfile(tuple(cons), normalizer=1.0)
            _, top = max_weight_bid(domain, draft)
            prof = PreferenceProfile(tuple(cons), normalizer=top, reserve=0.0)
            if issue_count == 1 or nonlinearity_witness(domain, prof, rng, tries=2000):
                break
        profiles.append(prof)
    return DomainSpec(domain, tuple(profiles))
