"""Sampling distributions of a root under bootstrap, hybrid and parametric families.

A :class:`RootSimulator` draws its ``B`` resampling paths once.  Shift
families (hybrid, location-parametric) reuse the same paths at every
``theta`` by adding ``theta``, so quantile curves ``u_p(theta)`` are computed
with common random numbers and are cheap to evaluate on a grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import SeqInferError
from .pivots import IDENTITY, RootKind, SmoothFunctional, pivot_arrays, sorted_quantile
from .sampling import IDENTITY_MAP, NormalKnownVar, ObservationMap, RandomStream, draw_many
from .stopping import StoppedSample, StoppingRule, stopping_times


@dataclass(frozen=True)
class RootSpec:
    kind: RootKind
    rule: StoppingRule
    omap: ObservationMap = IDENTITY_MAP
    h: SmoothFunctional = IDENTITY
    variance: str = "known"

    def __post_init__(self):
        if self.variance not in ("known", "estimated"):
            raise ValueError(f"variance must be 'known' or 'estimated', got {self.variance!r}")
        if self.omap.d != self.rule.d:
            raise ValueError("observation map and stopping rule disagree on dimension")
        if self.kind is RootKind.R_RENORM and (self.variance != "known" or self.rule.d != 1):
            raise ValueError("the renormalized root needs d = 1 and known unit variance")


# -- families ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Bootstrap:
    """Resample the stopped sample's scalars; the family ignores ``theta``."""

    data: np.ndarray = field(repr=False)

    @classmethod
    def from_sample(cls, sample: StoppedSample) -> "Bootstrap":
        return cls(np.asarray(sample.scalars, dtype=float))

    def center(self, spec: RootSpec, theta=None) -> float:
        lifted = spec.omap.lift_array(np.asarray(self.data, dtype=float))
        return float(spec.h(lifted.mean(axis=0)))

    def noise(self, stream: RandomStream, shape) -> np.ndarray:
        if len(self.data) == 0:
            raise SeqInferError("empty resampling support")
        return np.asarray(self.data)[stream.integers(len(self.data), shape)]

    shift = False


@dataclass(frozen=True, eq=False)
class HybridShift:
    """Centered residuals shifted to mean ``theta``: the family ``G(. - theta)``."""

    residuals: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = np.asarray(self.residuals, dtype=float)
        object.__setattr__(self, "residuals", r - r.mean() if r.size else r)

    @classmethod
    def from_sample(cls, sample: StoppedSample) -> "HybridShift":
        return cls(sample.scalars - sample.scalars.mean())

    def center(self, spec: RootSpec, theta) -> float:
        return float(theta)

    def noise(self, stream: RandomStream, shape) -> np.ndarray:
        if len(self.residuals) == 0:
            raise SeqInferError("empty resampling support")
        return self.residuals[stream.integers(len(self.residuals), shape)]

    shift = True


@dataclass(frozen=True)
class Parametric:
    """A one-parameter family ``theta -> Population``.

    With ``base`` given, the family is the location family ``theta + base``
    (``base`` should have mean zero).  Otherwise ``constructor(theta)`` is
    resampled afresh at each ``theta`` from an identically keyed stream.
    """

    base: Optional[object] = None
    constructor: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if (self.base is None) == (self.constructor is None):
            raise ValueError("give exactly one of base or constructor")

    @classmethod
    def normal(cls, sigma: float = 1.0) -> "Parametric":
        return cls(base=NormalKnownVar(0.0, sigma))

    def center(self, spec: RootSpec, theta) -> float:
        return float(theta)

    def noise(self, stream: RandomStream, shape) -> np.ndarray:
        return draw_many(self.base, stream, shape)

    @property
    def shift(self):
        return self.base is not None


# -- path summaries ------------------------------------------------------------


def summarize_paths(rule: StoppingRule, omap: ObservationMap, paths: np.ndarray, need_cov: bool):
    """Stop every row of ``paths`` (..., n0); return T, stopped means and covariances."""
    lifted = omap.lift_array(paths)
    sums = np.cumsum(lifted, axis=-2)
    T = stopping_times(rule, sums)
    idx = (T - 1)[..., None, None]
    means = np.take_along_axis(sums, idx, axis=-2)[..., 0, :] / T[..., None]
    V = None
    if need_cov:
        n = np.arange(1, paths.shape[-1] + 1)
        mask = (n <= T[..., None])[..., None]
        c = np.where(mask, lifted - means[..., None, :], 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            V = np.einsum("...ni,...nj->...ij", c, c) / (T - 1)[..., None, None]
    return T, means, V


def _roots(spec: RootSpec, T, means, V, center):
    p = pivot_arrays(spec.kind, spec.rule, spec.h, T, means, V)
    num = np.sqrt(p.T) * (p.center - center) - p.offset
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / p.scale
    bad = ~(p.scale > 0)
    if np.any(bad):
        # degenerate resample: sign of the numerator, or 0 when it vanishes
        r = np.where(bad, np.sign(num) * np.inf, r)
        r = np.where(bad & (num == 0), 0.0, r)
    return r


class RootSimulator:
    """Simulated root distributions for one family, drawing its paths once."""

    def __init__(self, family, spec: RootSpec, B: int, stream: RandomStream):
        if B < 1:
            raise ValueError("B must be at least 1")
        self.family = family
        self.spec = spec
        self.B = int(B)
        self.stream = stream
        n0 = spec.rule.n0
        self._need_cov = spec.variance == "estimated"
        self._fast = family.shift and spec.omap is IDENTITY_MAP and not self._need_cov
        if isinstance(family, Parametric) and family.base is None:
            self._noise = None
        else:
            self._noise = family.noise(stream, (self.B, n0))
        if self._fast:
            self._noise_sums = np.cumsum(self._noise, axis=-1)
            self._n = np.arange(1, n0 + 1, dtype=float)

    def _summaries(self, thetas: np.ndarray):
        spec = self.spec
        if self._fast:
            sums = self._noise_sums + thetas[:, None, None] * self._n
            T = stopping_times(spec.rule, sums[..., None])
            tot = np.take_along_axis(sums, (T - 1)[..., None], axis=-1)[..., 0]
            return T, (tot / T)[..., None], None
        if self._noise is None:
            shape = (self.B, spec.rule.n0)
            paths = np.stack([draw_many(self.family.constructor(t), self.stream.spawn("family"), shape) for t in thetas])
        elif self.family.shift:
            paths = thetas[:, None, None] + self._noise
        else:
            paths = np.broadcast_to(self._noise, (len(thetas),) + self._noise.shape)
        return summarize_paths(spec.rule, spec.omap, paths, self._need_cov)

    def roots(self, thetas, chunk: int = 16) -> np.ndarray:
        """Sorted root values, shape (len(thetas), B)."""
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        out = np.empty((len(thetas), self.B))
        for s in range(0, len(thetas), chunk):
            th = thetas[s : s + chunk]
            T, means, V = self._summaries(th)
            centers = np.array([self.family.center(self.spec, t) for t in th])
            out[s : s + chunk] = _roots(self.spec, T, means, V, centers[:, None])
        out.sort(axis=-1)
        return out

    def quantiles(self, thetas, alpha: float):
        """``(u_alpha(theta), u_{1-alpha}(theta))`` as two arrays."""
        r = self.roots(thetas)
        q = sorted_quantile(r, np.array([alpha, 1 - alpha]))
        q = np.atleast_2d(q)
        return q[:, 0], q[:, 1]


class QuantileCurve:
    """Memoized ``theta -> (u_alpha, u_{1-alpha})`` for a data-independent family.

    With ``lattice`` set, quantiles are computed at multiples of ``lattice``
    and linearly interpolated in between, so repeated interval computations
    (e.g. across Monte Carlo replicates) share work.
    """

    def __init__(self, simulator: RootSimulator, alpha: float, lattice: Optional[float] = None):
        self.simulator = simulator
        self.alpha = alpha
        self.lattice = lattice
        # dense table over lattice indices k0 .. k0 + len - 1; NaN marks unfilled
        self._k0 = 0
        self._table = np.empty((0, 2))

    def _grow(self, kmin: int, kmax: int):
        lo = min(kmin, self._k0) if len(self._table) else kmin
        hi = max(kmax, self._k0 + len(self._table) - 1) if len(self._table) else kmax
        table = np.full((hi - lo + 1, 2), np.nan)
        if len(self._table):
            table[self._k0 - lo : self._k0 - lo + len(self._table)] = self._table
        self._k0, self._table = lo, table

    def _at_nodes(self, keys: np.ndarray):
        keys = np.asarray(keys, dtype=np.int64)
        kmin, kmax = int(keys.min()), int(keys.max())
        if not len(self._table) or kmin < self._k0 or kmax >= self._k0 + len(self._table):
            self._grow(kmin, kmax)
        idx = keys - self._k0
        missing = np.unique(idx[np.isnan(self._table[idx, 0])])
        if missing.size:
            lo, hi = self.simulator.quantiles((missing + self._k0) * self.lattice, self.alpha)
            self._table[missing, 0] = lo
            self._table[missing, 1] = hi
        vals = self._table[idx]
        return vals[:, 0], vals[:, 1]

    def __call__(self, thetas):
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        if self.lattice is None:
            return self.simulator.quantiles(thetas, self.alpha)
        pos = thetas / self.lattice
        k0 = np.floor(pos).astype(np.int64)
        w = pos - k0
        lo0, hi0 = self._at_nodes(k0)
        lo1, hi1 = self._at_nodes(k0 + 1)
        return lo0 + w * (lo1 - lo0), hi0 + w * (hi1 - hi0)


def simulate_root_distribution(family, theta, spec: RootSpec, B: int, stream: RandomStream) -> np.ndarray:
    """Sorted sample of ``B`` root values under ``family`` at ``theta``.

    Bootstrap evaluates the root at the source sample's plug-in value and
    ignores ``theta``.
    """
    return RootSimulator(family, spec, B, stream).roots([theta])[0]


def quantile_pair(sorted_values: Sequence[float], alpha: float):
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    v = np.asarray(sorted_values, dtype=float)
    if v.size == 0:
        raise SeqInferError("empirical quantile of an empty list")
    v = np.sort(v)
    return sorted_quantile(v, alpha), sorted_quantile(v, 1 - alpha)
