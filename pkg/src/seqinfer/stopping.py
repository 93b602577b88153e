"""Truncated fully sequential stopping rules.

A rule stops at ``T = min(n0, max(t_a, n1))`` where ``t_a`` is the first ``n``
with ``n * g(S_n / n) >= a``.  Boundary functions act on the running mean of
the lifted observations and must broadcast over leading axes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .sampling import IDENTITY_MAP, SQUARE_MAP, ObservationMap, RandomStream, draw_many

# boundary ties that rounding pushes a few ulps below the threshold still count
CROSSING_RTOL = 1e-12
_VAR_RTOL = 8 * np.finfo(float).eps


@dataclass(frozen=True)
class BoundaryFunction:
    """Boundary statistic ``g`` with an optional analytic gradient.

    ``func`` maps an array of shape (..., d) to shape (...); ``gradient`` maps
    (..., d) to (..., d).  ``even`` marks ``g(-x) == g(x)`` for d = 1.
    """

    name: str
    d: int
    func: Callable = field(repr=False, compare=False)
    gradient: Optional[Callable] = field(default=None, repr=False, compare=False)
    params: tuple = ()
    even: bool = False

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            return self.gradient(x)
        from .pivots import numeric_gradient

        return numeric_gradient(self.func, x)


def quadratic_boundary() -> BoundaryFunction:
    """``g(x) = x**2 / 2``; with ``a`` this is the repeated significance test."""
    return BoundaryFunction(
        "quadratic",
        1,
        lambda x: 0.5 * x[..., 0] ** 2,
        lambda x: x.copy(),
        even=True,
    )


def smoothed_abs_boundary(delta: float = 0.5) -> BoundaryFunction:
    """``|x|`` with the kink at 0 replaced by a parabola on ``|x| <= delta``."""
    if not delta > 0:
        raise ValueError("delta must be positive")

    def func(x):
        x = x[..., 0]
        ax = np.abs(x)
        return np.where(ax <= delta, (delta * delta + x * x) / (2 * delta), ax)

    def gradient(x):
        return np.where(np.abs(x) <= delta, x / delta, np.sign(x))

    return BoundaryFunction("smoothed_abs", 1, func, gradient, params=(("delta", delta),), even=True)


def studentized_boundary() -> BoundaryFunction:
    """``g(eta, b) = eta**2 / (2 (b - eta**2))`` on the lifted pair ``(x, x**2)``.

    ``n g`` of the running means equals ``S_n**2 / (2 n sigma_n**2)`` with the
    divisor-n variance.  A zero variance with nonzero mean gives ``inf``.
    """

    def func(x):
        eta, b = x[..., 0], x[..., 1]
        v = b - eta * eta
        # a variance within rounding of zero counts as zero
        flat = np.abs(v) <= _VAR_RTOL * np.maximum(np.abs(b), eta * eta)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(v > 0, eta * eta / (2 * np.where(v > 0, v, 1.0)), 0.0)
        return np.where(flat & (eta != 0), np.inf, np.where(flat, 0.0, out))

    def gradient(x):
        eta, b = x[..., 0], x[..., 1]
        v = b - eta * eta
        ok = v > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            v2 = np.where(ok, v * v, 1.0)
            d_eta = np.where(ok, eta * b / v2, 0.0)
            d_b = np.where(ok, -0.5 * eta * eta / v2, 0.0)
        return np.stack([d_eta, d_b], axis=-1)

    return BoundaryFunction("studentized", 2, func, gradient)


BOUNDARIES = {
    "quadratic": quadratic_boundary,
    "smoothed_abs": smoothed_abs_boundary,
    "studentized": studentized_boundary,
}


@dataclass(frozen=True)
class StoppingRule:
    """``T = min(n0, first n >= n1 with n g(S_n / n) >= a)``.

    With ``clamp_early=True`` the crossing search starts at ``n = 1`` and a
    crossing before ``n1`` stops the trial at ``n1``: ``min(n0, max(t_a, n1))``.
    The two agree whenever ``n1 = 1``.
    """

    g: BoundaryFunction
    a: float
    n0: int
    n1: int
    clamp_early: bool = False

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("threshold a must be positive")
        if not 1 <= self.n1 < self.n0:
            raise ValueError(f"need 1 <= n1 < n0, got n1={self.n1}, n0={self.n0}")

    @property
    def d(self) -> int:
        return self.g.d

    @property
    def crossing_level(self) -> float:
        return self.a * (1.0 - CROSSING_RTOL)

    @property
    def eps0(self) -> float:
        return self.a / self.n0

    @property
    def eps1(self) -> float:
        return self.a / self.n1


def example1_rule(delta: float = 0.5) -> StoppingRule:
    return StoppingRule(smoothed_abs_boundary(delta), 9.0, 72, 1)


def example2_rule() -> StoppingRule:
    return StoppingRule(quadratic_boundary(), 4.5, 75, 15)


def example4_rule() -> StoppingRule:
    return StoppingRule(studentized_boundary(), 4.5, 75, 15)


def kappa(rule: StoppingRule, mu):
    """Limit of ``a / T``: ``g(mu)`` clamped to ``[eps0, eps1]``."""
    return np.clip(rule.g(mu), rule.eps0, rule.eps1)


@dataclass
class StoppedSample:
    T: int
    scalars: np.ndarray
    obs: np.ndarray
    mean: np.ndarray
    sums: np.ndarray

    def __post_init__(self):
        self.T = int(self.T)

    @property
    def d(self):
        return self.obs.shape[1]


def stopped_sample(xs, omap: ObservationMap = IDENTITY_MAP) -> StoppedSample:
    """Wrap an already stopped sample of scalars."""
    scalars = np.asarray(xs, dtype=float).reshape(-1)
    obs = omap.lift_array(scalars)
    sums = obs.sum(axis=0)
    return StoppedSample(len(scalars), scalars, obs, sums / len(scalars), sums)


def stopping_times(rule: StoppingRule, sums: np.ndarray) -> np.ndarray:
    """Stopping times for running sums of shape (..., m, d), m >= n0.

    Uses the same arithmetic as :func:`stopping_time_of`, so the two agree
    exactly on identical inputs.
    """
    sums = sums[..., : rule.n0, :]
    n = np.arange(1, rule.n0 + 1, dtype=float)
    stat = n * rule.g(sums / n[:, None])
    crossed = stat >= rule.crossing_level
    k = rule.n1 - 1
    hit = crossed[..., k:].copy()
    if rule.clamp_early:
        hit[..., 0] |= crossed[..., :k].any(axis=-1)
    first = np.argmax(hit, axis=-1)
    return np.where(hit.any(axis=-1), rule.n1 + first, rule.n0)


def stopping_time_of(rule: StoppingRule, xs: Iterable) -> int:
    """Stopping time of a (possibly infinite) sequence of d-vectors or scalars.

    Consumes at most ``n0`` elements.
    """
    s = np.zeros(rule.d)
    crossed = False
    n = 0
    for n, x in enumerate(itertools.islice(iter(xs), rule.n0), start=1):
        s = s + np.asarray(x, dtype=float).reshape(rule.d)
        if not crossed and (rule.clamp_early or n >= rule.n1):
            crossed = bool(n * rule.g(s / float(n)) >= rule.crossing_level)
        if crossed and n >= rule.n1:
            return n
    if n < rule.n0:
        raise ValueError(f"sequence exhausted after {n} elements, before truncation at n0={rule.n0}")
    return rule.n0


def run_trial(rule: StoppingRule, pop, omap: ObservationMap, stream: RandomStream) -> StoppedSample:
    """Draw one sequential trial from ``pop`` and stop it under ``rule``."""
    if omap.d != rule.d:
        raise ValueError(f"observation map dimension {omap.d} != rule dimension {rule.d}")
    xs = draw_many(pop, stream, rule.n0)
    lifted = omap.lift_array(xs)
    T = int(stopping_times(rule, np.cumsum(lifted, axis=0)))
    return stopped_sample(xs[:T], omap)


def default_map(rule: StoppingRule) -> ObservationMap:
    return IDENTITY_MAP if rule.d == 1 else SQUARE_MAP
