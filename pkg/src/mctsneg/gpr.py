"""Gaussian process regression over negotiation turns.

Kernels have unit signal variance. ``noise`` is the observation variance
added to the diagonal of the training covariance and to the predictive
variance at the test point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize

FAMILIES = ("rbf", "rqf", "matern", "ess")

JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

# log-space search box per parameter
BOUNDS = {
    "lengthscale": (1e-2, 1e3),
    "alpha": (1e-2, 1e2),
    "period": (1.0, 1e3),
    "noise": (1e-6, 1e2),
}


@dataclass(frozen=True)
class Kernel:
    family: str = "rqf"
    lengthscale: float = 10.0
    alpha: float = 1.0
    period: float = 10.0
    noise: float = 1e-6

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        for name in ("lengthscale", "alpha", "period"):
            if not getattr(self, name) > 0:
                raise ValueError(f"kernel {name} must be positive")
        if not self.noise >= 0:
            raise ValueError("kernel noise must be >= 0")

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
            raise ValueError("kernel inputs must be finite")
        r = np.abs(x1 - x2)
        ell = self.lengthscale
        if self.family == "rbf":
            return np.exp(-0.5 * (r / ell) ** 2)
        if self.family == "rqf":
            return (1.0 + r**2 / (2.0 * self.alpha * ell**2)) ** (-self.alpha)
        if self.family == "matern":
            z = math.sqrt(3.0) * r / ell
            return (1.0 + z) * np.exp(-z)
        # exponential sine squared
        return np.exp(-2.0 * np.sin(np.pi * r / self.period) ** 2 / ell**2)

    def matrix(self, xa: Sequence[float], xb: Sequence[float] | None = None) -> np.ndarray:
        xa = np.asarray(xa, dtype=float)
        xb = xa if xb is None else np.asarray(xb, dtype=float)
        return self(xa[:, None], xb[None, :])

    # parameters that are free for each family
    def free(self) -> tuple[str, ...]:
        extra = {"rqf": ("alpha",), "ess": ("period",)}.get(self.family, ())
        return ("lengthscale",) + extra + ("noise",)


def kernel_eval(k: Kernel, x1: float, x2: float) -> float:
    return float(k(x1, x2))


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float


def _factor(K: np.ndarray, noise: float):
    n = len(K)
    for jitter in JITTERS:
        try:
            return cho_factor(K + (noise + jitter) * np.eye(n), lower=True), jitter
        except LinAlgError:
            continue
    raise LinAlgError("covariance not positive definite at maximum jitter")


class GaussianProcess:
    """Posterior of a zero-mean GP fitted to centred targets.

    Immutable once built; ``with_data`` returns a new model.
    """

    def __init__(self, kernel: Kernel, xs: Sequence[float] = (), ys: Sequence[float] = ()):
        xs = np.asarray(xs, dtype=float).reshape(-1)
        ys = np.asarray(ys, dtype=float).reshape(-1)
        if xs.shape != ys.shape:
            raise ValueError("xs and ys must have the same length")
        self.kernel = kernel
        self.xs = xs
        self.ys = ys
        self.offset = float(ys.mean()) if len(ys) else 0.0
        if len(xs):
            K = kernel.matrix(xs)
            (self._L, _), self.jitter = _factor(K, kernel.noise)
            self._alpha = cho_solve((self._L, True), ys - self.offset)
        else:
            self._L = None
            self.jitter = 0.0
            self._alpha = np.zeros(0)

    def __len__(self) -> int:
        return len(self.xs)

    def with_data(self, xs, ys) -> "GaussianProcess":
        return GaussianProcess(self.kernel, xs, ys)

    def predict_many(self, xstar: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        xstar = np.asarray(xstar, dtype=float).reshape(-1)
        prior = np.ones_like(xstar) + self.kernel.noise
        if not len(self.xs):
            return np.full_like(xstar, self.offset), prior
        Ks = self.kernel.matrix(xstar, self.xs)
        mean = self.offset + Ks @ self._alpha
        v = solve_triangular(self._L, Ks.T, lower=True)
        var = prior - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def predict(self, xstar: float) -> Prediction:
        m, v = self.predict_many([xstar])
        return Prediction(float(m[0]), float(v[0]))

    def log_marginal_likelihood(self) -> float:
        if not len(self.xs):
            return 0.0
        yc = self.ys - self.offset
        return float(-0.5 * yc @ self._alpha - np.sum(np.log(np.diag(self._L)))
                     - 0.5 * len(yc) * math.log(2 * math.pi))


def predict(model: GaussianProcess, xstar: float) -> Prediction:
    return model.predict(xstar)


def sample_prediction(p: Prediction, rng: np.random.Generator) -> float:
    if p.variance <= 0:
        return p.mean
    return float(rng.normal(p.mean, math.sqrt(p.variance)))


def _lml(kernel: Kernel, xs: np.ndarray, yc: np.ndarray) -> float:
    try:
        (L, _), _ = _factor(kernel.matrix(xs), kernel.noise)
    except LinAlgError:
        return -np.inf
    a = cho_solve((L, True), yc)
    return float(-0.5 * yc @ a - np.sum(np.log(np.diag(L))) - 0.5 * len(yc) * math.log(2 * math.pi))


def fit_hyperparams(xs: Sequence[float], ys: Sequence[float], family: str = "rqf",
                    default: Kernel | None = None, starts: int = 4) -> Kernel:
    """Maximise the log marginal likelihood by multi-start bounded Nelder-Mead.

    Searches log-parameters inside ``BOUNDS``. The default kernel is one of the
    candidates, so the result is never worse than it.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2:
        raise ValueError("need at least two observations to fit")
    base = default or Kernel(family)
    if base.family != family:
        base = replace(base, family=family)
    yc = ys - ys.mean()
    if np.ptp(ys) == 0:
        return replace(base, noise=max(base.noise, BOUNDS["noise"][0]))

    names = base.free()
    lo = np.log([BOUNDS[n][0] for n in names])
    hi = np.log([BOUNDS[n][1] for n in names])

    def make(theta):
        return replace(base, **{n: float(np.exp(t)) for n, t in zip(names, theta)})

    def objective(theta):
        val = _lml(make(np.clip(theta, lo, hi)), xs, yc)
        return 1e10 if not np.isfinite(val) else -val

    span = max(float(np.ptp(xs)), 1.0)
    var = max(float(yc.var()), 1e-6)
    # deterministic spread of starting points over lengthscale and noise
    start_points = []
    for s in range(starts):
        frac = (s + 0.5) / starts
        theta = []
        for n in names:
            if n == "lengthscale":
                theta.append(np.log(span) + (frac - 0.5) * 4.0)
            elif n == "noise":
                theta.append(np.log(var) - 1.0 - 3.0 * frac)
            else:
                theta.append(np.log(getattr(base, n)))
        start_points.append(np.clip(theta, lo, hi))

    best_theta = np.clip(np.log([getattr(base, n) for n in names]), lo, hi)
    best_val = objective(best_theta)
    for x0 in start_points:
        res = minimize(objective, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"xatol": 1e-3, "fatol": 1e-6, "maxiter": 400})
        if res.fun < best_val:
            best_val, best_theta = res.fun, np.clip(res.x, lo, hi)
    return make(best_theta)


# ---------------------------------------------------------------------------
# Kernel benchmark
# ---------------------------------------------------------------------------


def next_bid_distances(seq: np.ndarray, family: str, refit_every: int = 5) -> list[float]:
    """Distance between each bid (from the third on) and its one-step GPR forecast.

    One regressor per issue column; hyperparameters are refitted every
    ``refit_every`` observations and reused in between.
    """
    seq = np.asarray(seq, dtype=float)
    if seq.ndim == 1:
        seq = seq[:, None]
    turns = np.arange(1, len(seq) + 1, dtype=float)
    kernels = [Kernel(family)] * seq.shape[1]
    out = []
    for t in range(2, len(seq)):
        if t == 2 or t % refit_every == 0:
            kernels = [fit_hyperparams(turns[:t], seq[:t, j], family) for j in range(seq.shape[1])]
        pred = np.array([GaussianProcess(kernels[j], turns[:t], seq[:t, j]).predict(turns[t]).mean
                         for j in range(seq.shape[1])])
        out.append(float(np.linalg.norm(pred - seq[t])))
    return out


def kernel_benchmark(sequences: Sequence[np.ndarray], families: Sequence[str] = FAMILIES,
                     refit_every: int = 5) -> dict[str, float]:
    """Average next-bid Euclidean distance per kernel family."""
    for s in sequences:
        if len(s) < 3:
            raise ValueError("every sequence needs at least three bids")
    table = {}
    for fam in families:
        dists = []
        for s in sequences:
            dists.extend(next_bid_distances(s, fam, refit_every))
        table[fam] = float(np.mean(dists))
    return table


def synthetic_concession_traces(seed: int, count: int = 50, length: int = 20,
                                issues: int = 2) -> list[np.ndarray]:
    """Bid sequences on a 1..10 issue scale: linear drift + sinusoid + noise.

    Per trace and issue: start ~ U(6, 10), slope ~ U(-0.25, 0.05) per turn,
    amplitude ~ U(0.3, 1.2), period ~ U(6, 16) turns, random phase, Gaussian
    noise sd 0.15. Values are clipped to [1, 10].
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=float)
    traces = []
    for _ in range(count):
        cols = []
        for _ in range(issues):
            start = rng.uniform(6, 10)
            slope = rng.uniform(-0.25, 0.05)
            amp = rng.uniform(0.3, 1.2)
            period = rng.uniform(6, 16)
            phase = rng.uniform(0, 2 * np.pi)
            y = start + slope * t + amp * np.sin(2 * np.pi * t / period + phase)
            y += rng.normal(0, 0.15, size=length)
            cols.append(np.clip(y, 1, 10))
        traces.append(np.stack(cols, axis=1))
    return traces
