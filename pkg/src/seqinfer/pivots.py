"""Moment estimates, the stopping-bias functional and the three roots.

Every root used here is affine and decreasing in the hypothesized value
``theta`` of ``h(mu)``::

    r(theta) = (sqrt(T) * (h(mean) - theta) - offset) / scale

R0 has ``offset = 0, scale = sigma``; R1 subtracts ``b / sqrt(T)``; the
renormalized R (unit variance, d = 1) additionally uses
``scale = 1 + b**2 / (2 T)``.  :class:`AffinePivot` carries these pieces and
inverts the root in closed form.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri, stdtrit

from .exceptions import DegenerateSampleError, SeqInferError
from .stopping import StoppedSample, StoppingRule, kappa

KINK_TOL = 1e-9
_FD_EPS = np.finfo(float).eps ** (1.0 / 3.0)


def _fd_steps(x):
    return _FD_EPS * np.maximum(1.0, np.abs(x))


def numeric_gradient(f: Callable, x) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at points of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    steps = _fd_steps(x)
    out = np.empty_like(x)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        hi = steps[..., i : i + 1]
        out[..., i] = (f(x + hi * e) - f(x - hi * e)) / (2 * steps[..., i])
    return out


def numeric_hessian(grad: Callable, x) -> np.ndarray:
    """Central differences of a gradient function; symmetrized."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    steps = _fd_steps(x)
    H = np.empty(x.shape + (d,))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        hj = steps[..., j : j + 1]
        H[..., :, j] = (grad(x + hj * e) - grad(x - hj * e)) / (2 * hj)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


@dataclass(frozen=True)
class SmoothFunctional:
    """Smooth ``h`` of the mean vector with optional analytic derivatives."""

    func: Callable = field(repr=False)
    d: int = 1
    gradient: Optional[Callable] = field(default=None, repr=False)
    hessian: Optional[Callable] = field(default=None, repr=False)
    name: str = "h"

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            return np.broadcast_to(self.gradient(x), x.shape)
        return numeric_gradient(self.func, x)

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        if self.hessian is not None:
            return np.broadcast_to(self.hessian(x), x.shape + (self.d,))
        return numeric_hessian(self.grad, x)

    @classmethod
    def coordinate(cls, i: int = 0, d: int = 1) -> "SmoothFunctional":
        """``h(x) = x[i]``: the mean itself when d = 1 or the first moment of a lift."""
        e = np.zeros(d)
        e[i] = 1.0
        return cls(
            lambda x: x[..., i],
            d,
            lambda x: np.broadcast_to(e, x.shape),
            lambda x: np.zeros(x.shape + (d,)),
            name=f"coord{i}",
        )


IDENTITY = SmoothFunctional.coordinate(0, 1)


class RootKind(enum.Enum):
    R0 = "R0"
    R1 = "R1"
    R_RENORM = "R"


@dataclass
class MomentEstimates:
    V: np.ndarray
    sigma: float


def sample_covariance(obs: np.ndarray) -> np.ndarray:
    """Covariance with divisor T - 1 of an array of shape (T, d)."""
    T = obs.shape[0]
    if T < 2:
        raise DegenerateSampleError("degenerate sample")
    c = obs - obs.mean(axis=0)
    return c.T @ c / (T - 1)


def moment_estimates(sample: StoppedSample, h: SmoothFunctional = IDENTITY) -> MomentEstimates:
    V = sample_covariance(sample.obs)
    gh = h.grad(sample.mean)
    s2 = float(gh @ V @ gh)
    return MomentEstimates(V, float(np.sqrt(max(s2, 0.0))))


def grad_kappa_sqrt(rule: StoppingRule, mu, return_kink: bool = False):
    """Gradient of ``sqrt(kappa)`` at ``mu`` (shape (..., d)).

    Zero wherever ``kappa`` is clamped.  Within ``KINK_TOL`` of a clamp the
    clamped-side value (zero) is used and, with ``return_kink``, flagged.
    """
    mu = np.asarray(mu, dtype=float)
    gv = rule.g(mu)
    at_kink = (np.abs(gv - rule.eps0) <= KINK_TOL) | (np.abs(gv - rule.eps1) <= KINK_TOL)
    inside = (gv > rule.eps0) & (gv < rule.eps1) & ~at_kink
    safe = np.where(inside, gv, 1.0)
    out = np.where(inside[..., None], 0.5 * rule.g.grad(mu) / np.sqrt(safe)[..., None], 0.0)
    if return_kink:
        return out, at_kink
    return out


def bias_b(rule: StoppingRule, mu, V, h: SmoothFunctional = IDENTITY):
    """First-order stopping bias of ``sqrt(T) (h(mean) - h(mu))`` in units of ``sqrt(kappa / a)``.

    ``mu`` has shape (..., d) and ``V`` shape (..., d, d).
    """
    mu = np.asarray(mu, dtype=float)
    V = np.asarray(V, dtype=float)
    gk = grad_kappa_sqrt(rule, mu)
    gh = h.grad(mu)
    lin = np.einsum("...i,...ij,...j->...", gk, V, gh) / np.sqrt(kappa(rule, mu))
    quad = 0.5 * np.einsum("...ij,...ji->...", h.hess(mu), V)
    return lin + quad


# -- affine roots -----------------------------------------------------------


@dataclass
class AffinePivot:
    """``r(theta) = (sqrt(T) (center - theta) - offset) / scale``; arrays broadcast."""

    center: np.ndarray
    T: np.ndarray
    scale: np.ndarray
    offset: np.ndarray

    def __call__(self, theta):
        return (np.sqrt(self.T) * (self.center - theta) - self.offset) / self.scale

    def invert(self, u):
        """The ``theta`` at which the root equals ``u``."""
        return self.center - (u * self.scale + self.offset) / np.sqrt(self.T)


def pivot_arrays(kind: RootKind, rule: Optional[StoppingRule], h: SmoothFunctional, T, means, V=None) -> AffinePivot:
    """Batched pivots from stopping times (...,), means (..., d) and covariances.

    ``V=None`` selects the known-unit-variance mode (V = I).
    """
    T = np.asarray(T, dtype=float)
    means = np.asarray(means, dtype=float)
    d = means.shape[-1]
    known = V is None
    if known:
        V = np.broadcast_to(np.eye(d), means.shape + (d,))
    gh = h.grad(means)
    sigma = np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", gh, V, gh), 0.0))
    center = h(means)
    if kind is RootKind.R0:
        return AffinePivot(center, T, sigma, np.zeros_like(center))
    b = bias_b(rule, means, V, h)
    offset = b / np.sqrt(T)
    if kind is RootKind.R1:
        return AffinePivot(center, T, sigma, offset)
    if not known or d != 1:
        raise ValueError("the renormalized root needs d = 1 and known unit variance")
    return AffinePivot(center, T, 1.0 + b * b / (2 * T), offset)


def sample_pivot(
    sample: StoppedSample,
    kind: RootKind,
    rule: Optional[StoppingRule] = None,
    h: SmoothFunctional = IDENTITY,
    variance: str = "estimated",
) -> AffinePivot:
    if variance not in ("known", "estimated"):
        raise ValueError(f"variance must be 'known' or 'estimated', got {variance!r}")
    if kind is not RootKind.R0 and rule is None:
        raise ValueError(f"root {kind.value} needs the stopping rule")
    V = None if variance == "known" else sample_covariance(sample.obs)
    p = pivot_arrays(kind, rule, h, sample.T, sample.mean, V)
    if not p.scale > 0:
        raise DegenerateSampleError("zero estimated variance")
    return p


def eval_R0(sample: StoppedSample, h: SmoothFunctional = IDENTITY, theta=0.0, variance: str = "estimated"):
    """Naive root ``sqrt(T) (h(mean) - theta) / sigma``."""
    return float(sample_pivot(sample, RootKind.R0, None, h, variance)(theta))


def eval_R1(sample, rule, h: SmoothFunctional = IDENTITY, theta=0.0, variance: str = "estimated"):
    """Bias-corrected root, bias evaluated at the plug-in ``(mean, V)``."""
    return float(sample_pivot(sample, RootKind.R1, rule, h, variance)(theta))


def eval_R(sample, rule, mu=0.0):
    """Renormalized root for a unit-variance scalar mean."""
    return float(sample_pivot(sample, RootKind.R_RENORM, rule, IDENTITY, "known")(mu))


# -- scalar numerics ----------------------------------------------------------


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("probability must lie strictly between 0 and 1")
    return p


def normal_quantile(p):
    p = _check_prob(p)
    out = ndtri(p)
    return float(out) if out.ndim == 0 else out


def t_quantile(p, df):
    p = _check_prob(p)
    if np.any(np.asarray(df) < 1):
        raise ValueError("degrees of freedom must be >= 1")
    out = stdtrit(np.asarray(df, dtype=float), p)
    return float(out) if np.ndim(out) == 0 else out


def sorted_quantile(sorted_values: np.ndarray, p):
    """Linear interpolation between order statistics of an ascending array.

    Position ``h = (n - 1) p`` (0-based); returns ``x[lo] + frac (x[lo+1] - x[lo])``.
    Works along the last axis.
    """
    x = np.asarray(sorted_values, dtype=float)
    n = x.shape[-1]
    if n == 0:
        raise SeqInferError("empirical quantile of an empty list")
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p must lie in [0, 1]")
    pos = (n - 1) * p
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    xl = np.take(x, lo, axis=-1)
    xh = np.take(x, hi, axis=-1)
    with np.errstate(invalid="ignore"):
        out = np.where((frac == 0) | (xl == xh), xl, xl + frac * (xh - xl))
    return float(out) if out.ndim == 0 else out


def empirical_quantile(values, p):
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))
    return sorted_quantile(v, p)
