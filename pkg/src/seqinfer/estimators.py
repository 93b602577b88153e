"""scikit-learn style front end for the interval constructors."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .intervals import (
    GridSpec,
    default_grid,
    interval_bootstrap,
    interval_exact,
    interval_hybrid,
    interval_normal_R,
    interval_normal_R0,
    interval_normal_R1,
    interval_t,
)
from .pivots import RootKind, SmoothFunctional
from .resampling import Parametric, RootSpec
from .sampling import RandomStream
from .stopping import StoppingRule, default_map, example2_rule, stopped_sample

METHODS = (
    "normal_R0",
    "normal_R1",
    "normal_R",
    "t_R0",
    "t_R1",
    "boot_R0",
    "boot_R1",
    "hybrid",
    "exact",
)


def check_stopped_sample(X, rule: StoppingRule):
    """Validate a stopped sample of scalars and wrap it for ``rule``."""
    x = check_array(X, ensure_2d=False, dtype=np.float64)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError(f"expected a single column of scalar observations, got shape {x.shape}")
        x = x[:, 0]
    if not rule.n1 <= len(x) <= rule.n0:
        raise ValueError(f"sample size {len(x)} is outside [n1, n0] = [{rule.n1}, {rule.n0}]")
    return stopped_sample(x, default_map(rule))


def method_variance(method: str, variance=None) -> str:
    """The variance mode ``method`` runs with; None picks the method's default."""
    if method.startswith("t_"):
        return "estimated"
    if method in ("normal_R", "hybrid", "exact"):
        return "known"
    if variance is None:
        # the bootstrap is studentized unless asked otherwise
        return "estimated" if method.startswith("boot_") else "known"
    return variance


def build_interval(sample, rule: StoppingRule, method: str, alpha: float, variance=None,
                   B=None, stream=None, grid=None, h=None, curve=None):
    """Dispatch one interval construction by method tag."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    omap = default_map(rule)
    h = h or SmoothFunctional.coordinate(0, rule.d)
    variance = method_variance(method, variance)
    if method == "normal_R0":
        return interval_normal_R0(sample, h, alpha, variance)
    if method == "normal_R1":
        return interval_normal_R1(sample, rule, h, alpha, variance)
    if method == "normal_R":
        return interval_normal_R(sample, rule, alpha)
    if method in ("t_R0", "t_R1"):
        return interval_t(sample, rule, h, alpha, RootKind(method[2:]))
    if method in ("boot_R0", "boot_R1"):
        spec = RootSpec(RootKind(method[5:]), rule, omap, h, variance)
        return interval_bootstrap(sample, spec, alpha, B or 1000, stream)
    spec = RootSpec(RootKind.R0, rule, omap, h, "known")
    if method == "hybrid":
        return interval_hybrid(sample, spec, alpha, B or 1000, grid, stream)
    return interval_exact(sample, Parametric.normal(), spec, alpha, B or 10_000, grid, stream, curve)


class SequentialConfidenceInterval(BaseEstimator):
    """Confidence interval for the mean of a sequentially stopped sample.

    Parameters
    ----------
    rule : StoppingRule, default None
        The stopping rule that produced the sample; the repeated significance
        test ``|S_n| >= 3 sqrt(n)``, ``15 <= n <= 75`` when None.
    method : str, default "hybrid"
        One of ``normal_R0, normal_R1, normal_R, t_R0, t_R1, boot_R0,
        boot_R1, hybrid, exact``.
    alpha : float, default 0.05
        Nominal error of each one-sided bound.
    variance : {"known", "estimated"} or None, default None
        Unit known variance or plug-in estimates for the normal and bootstrap
        roots. None means known for normal roots and estimated (studentized)
        for bootstrap roots.
    n_resamples : int or None
        B; 1000 for bootstrap and hybrid, 10000 for exact when None.
    grid_points : int, default 161
    random_state : int, default 0

    Attributes
    ----------
    interval_ : IntervalResult
    lower_, upper_ : float
    n_samples_ : int
        The stopping time T of the fitted sample.
    """

    def __init__(self, rule=None, method="hybrid", alpha=0.05, variance=None,
                 n_resamples=None, grid_points=161, random_state=0):
        self.rule = rule
        self.method = method
        self.alpha = alpha
        self.variance = variance
        self.n_resamples = n_resamples
        self.grid_points = grid_points
        self.random_state = random_state

    def fit(self, X, y=None):
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        rule = self.rule if self.rule is not None else example2_rule()
        sample = check_stopped_sample(X, rule)
        grid = None
        if self.method in ("hybrid", "exact"):
            grid = default_grid(sample, points=self.grid_points)
        stream = RandomStream(self.random_state, 0)
        self.interval_ = build_interval(sample, rule, self.method, self.alpha, self.variance,
                                        self.n_resamples, stream, grid)
        self.lower_ = self.interval_.lower
        self.upper_ = self.interval_.upper
        self.n_samples_ = sample.T
        return self

    def predict(self, theta):
        """Whether each hypothesized mean lies in the fitted interval."""
        check_is_fitted(self, "interval_")
        theta = np.asarray(theta, dtype=float)
        return (self.lower_ <= theta) & (theta <= self.upper_)
