"""Confidence-interval constructors after sequential stopping.

Closed-form intervals invert an affine root at normal or t quantiles; the
bootstrap inverts it at resampled quantiles.  Hybrid and exact intervals
test every node of a grid, ``u_alpha(theta) < r(theta) < u_{1-alpha}(theta)``
with strict inequalities, then bisect the two boundary cells.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .pivots import (
    IDENTITY,
    AffinePivot,
    RootKind,
    SmoothFunctional,
    normal_quantile,
    sample_covariance,
    sample_pivot,
    sorted_quantile,
    t_quantile,
)
from .resampling import (
    Bootstrap,
    HybridShift,
    Parametric,
    QuantileCurve,
    RootSimulator,
    RootSpec,
)
from .sampling import RandomStream
from .stopping import StoppedSample, StoppingRule

REFINE_STEPS = 20


@dataclass
class IntervalResult:
    lower: float
    upper: float
    method: str
    alpha: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = float(self.lower)
        self.upper = float(self.upper)
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, theta) -> bool:
        return self.lower <= theta <= self.upper

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GridSpec:
    center: float
    half_width: float
    points: int = 161

    def __post_init__(self):
        if self.points < 3 or self.points % 2 == 0:
            raise ValueError("grid points must be an odd integer >= 3")
        if not self.half_width > 0:
            raise ValueError("grid half_width must be positive")

    def nodes(self) -> np.ndarray:
        return np.linspace(self.center - self.half_width, self.center + self.half_width, self.points)


def default_grid(sample: StoppedSample, h: SmoothFunctional = IDENTITY, variance="known", points: int = 161) -> GridSpec:
    """Grid at ``h(mean)`` with half-width ``8 max(sigma, 1) / sqrt(T)``."""
    sigma = 1.0
    if variance == "estimated":
        V = sample_covariance(sample.obs)
        gh = h.grad(sample.mean)
        sigma = float(np.sqrt(max(gh @ V @ gh, 0.0)))
    center = float(h(sample.mean))
    return GridSpec(center, 8.0 * max(sigma, 1.0) / np.sqrt(sample.T), points)


def _closed_form(pivot: AffinePivot, q_lo: float, q_hi: float, method: str, alpha: float, **diag) -> IntervalResult:
    # the root decreases in theta: the upper quantile gives the lower limit
    return IntervalResult(float(pivot.invert(q_hi)), float(pivot.invert(q_lo)), method, alpha, diag)


def interval_normal_R0(sample: StoppedSample, h: SmoothFunctional = IDENTITY, alpha: float = 0.05, variance: str = "estimated") -> IntervalResult:
    p = sample_pivot(sample, RootKind.R0, None, h, variance)
    return _closed_form(p, normal_quantile(alpha), normal_quantile(1 - alpha), "normal_R0", alpha, T=sample.T)


def interval_normal_R1(sample, rule: StoppingRule, h: SmoothFunctional = IDENTITY, alpha: float = 0.05, variance: str = "estimated") -> IntervalResult:
    p = sample_pivot(sample, RootKind.R1, rule, h, variance)
    return _closed_form(p, normal_quantile(alpha), normal_quantile(1 - alpha), "normal_R1", alpha, T=sample.T, b=float(p.offset * np.sqrt(p.T)))


def interval_normal_R(sample, rule: StoppingRule, alpha: float = 0.05) -> IntervalResult:
    p = sample_pivot(sample, RootKind.R_RENORM, rule, IDENTITY, "known")
    return _closed_form(p, normal_quantile(alpha), normal_quantile(1 - alpha), "normal_R", alpha, T=sample.T, b=float(p.offset * np.sqrt(p.T)))


def interval_t(sample, rule: StoppingRule, h: SmoothFunctional = IDENTITY, alpha: float = 0.05, root_kind: RootKind = RootKind.R0) -> IntervalResult:
    """Estimated-variance R0 or R1 interval with t quantiles on T degrees of freedom."""
    if root_kind not in (RootKind.R0, RootKind.R1):
        raise ValueError("t intervals are defined for R0 and R1")
    p = sample_pivot(sample, root_kind, rule, h, "estimated")
    df = sample.T
    return _closed_form(p, t_quantile(alpha, df), t_quantile(1 - alpha, df), f"t_{root_kind.value}", alpha, T=sample.T)


def interval_bootstrap(sample: StoppedSample, spec: RootSpec, alpha: float = 0.05, B: int = 1000, stream: Optional[RandomStream] = None) -> IntervalResult:
    """Sequential bootstrap: invert the data root at resampled quantiles."""
    stream = stream if stream is not None else RandomStream(0, 0)
    p = sample_pivot(sample, spec.kind, spec.rule, spec.h, spec.variance)
    family = Bootstrap.from_sample(sample)
    roots = RootSimulator(family, spec, B, stream).roots([family.center(spec)])[0]
    u_lo, u_hi = sorted_quantile(roots, alpha), sorted_quantile(roots, 1 - alpha)
    return _closed_form(p, u_lo, u_hi, f"boot_{spec.kind.value}", alpha, T=sample.T, B=B, u=(u_lo, u_hi))


def scan_grid(pivot: AffinePivot, quantiles: Callable, grid: GridSpec, refine: int = REFINE_STEPS):
    """Grid acceptance scan with boundary-cell bisection.

    ``quantiles(thetas)`` returns the lower and upper root quantiles at each
    theta.  Returns ``(lower, upper, flags, n_accepted)``; an empty acceptance
    set collapses to the root's center with the flag ``empty-acceptance``.
    """
    nodes = grid.nodes()

    def accept(thetas):
        lo, hi = quantiles(thetas)
        r = pivot(thetas)
        return (lo < r) & (r < hi)

    ok = accept(nodes)
    flags = []
    if not ok.any():
        c = float(pivot.center)
        return c, c, ["empty-acceptance"], 0
    idx = np.flatnonzero(ok)
    i_min, i_max = idx[0], idx[-1]
    if len(idx) != i_max - i_min + 1:
        flags.append("non-interval")

    def bisect(inside: float, outside: float) -> float:
        for _ in range(refine):
            mid = 0.5 * (inside + outside)
            if accept(np.array([mid]))[0]:
                inside = mid
            else:
                outside = mid
        return 0.5 * (inside + outside)

    if i_min == 0:
        flags.append("grid-hull-lower")
        lower = nodes[0]
    else:
        lower = bisect(nodes[i_min], nodes[i_min - 1])
    if i_max == len(nodes) - 1:
        flags.append("grid-hull-upper")
        upper = nodes[-1]
    else:
        upper = bisect(nodes[i_max], nodes[i_max + 1])
    return float(lower), float(upper), flags, int(len(idx))


def interval_hybrid(
    sample: StoppedSample,
    spec: RootSpec,
    alpha: float = 0.05,
    B: int = 1000,
    grid: Optional[GridSpec] = None,
    stream: Optional[RandomStream] = None,
) -> IntervalResult:
    """Hybrid resampling from the residual family shifted to each grid value."""
    if spec.variance != "known" or spec.rule.d != 1:
        raise ValueError("hybrid intervals are implemented for the known-unit-variance scalar mean")
    stream = stream if stream is not None else RandomStream(0, 0)
    grid = grid or default_grid(sample, spec.h, "known")
    p = sample_pivot(sample, spec.kind, spec.rule, spec.h, "known")
    sim = RootSimulator(HybridShift.from_sample(sample), spec, B, stream)
    lower, upper, flags, n_acc = scan_grid(p, lambda th: sim.quantiles(th, alpha), grid)
    return IntervalResult(lower, upper, "hybrid", alpha, dict(T=sample.T, B=B, grid=asdict(grid), flags=flags, accepted=n_acc))


def interval_exact(
    sample: StoppedSample,
    family: Optional[Parametric] = None,
    spec: Optional[RootSpec] = None,
    alpha: float = 0.05,
    B: int = 10_000,
    grid: Optional[GridSpec] = None,
    stream: Optional[RandomStream] = None,
    curve: Optional[QuantileCurve] = None,
) -> IntervalResult:
    """Exact method under a parametric family with the root ``sqrt(T)(mean - theta)``.

    The quantile curve does not depend on the data; pass a shared ``curve``
    to reuse it across samples.
    """
    if spec is None or spec.kind is not RootKind.R0 or spec.variance != "known":
        raise ValueError("the exact method uses the known-variance R0 root")
    if curve is None:
        family = family if family is not None else Parametric.normal()
        stream = stream if stream is not None else RandomStream(0, 0)
        curve = QuantileCurve(RootSimulator(family, spec, B, stream), alpha)
    elif curve.alpha != alpha:
        raise ValueError("curve alpha differs from the requested alpha")
    grid = grid or default_grid(sample, spec.h, "known")
    p = sample_pivot(sample, RootKind.R0, spec.rule, spec.h, "known")
    lower, upper, flags, n_acc = scan_grid(p, curve, grid)
    return IntervalResult(lower, upper, "exact", alpha, dict(T=sample.T, B=curve.simulator.B, grid=asdict(grid), flags=flags, accepted=n_acc))
