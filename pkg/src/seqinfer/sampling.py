"""Seedable random streams, sampling populations and observation maps.

Streams are counter-based (Philox 4x64) and keyed by ``(master_seed, stream_id)``,
so any stream can be built directly without replaying the others.  Normal
variates come from inversion of the normal CDF and exponential variates from
``-log(U)``; golden values therefore depend only on the uniform sequence.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import ndtri

from .exceptions import SeqInferError

_MASK64 = (1 << 64) - 1
_TWO53 = float(1 << 53)


def derive_stream_id(*parts) -> int:
    """Hash an arbitrary tuple of ints/strings to a 64-bit stream id."""
    text = "/".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class RandomStream:
    """Deterministic stream of variates for one ``(master_seed, stream_id)`` key."""

    def __init__(self, master_seed: int, stream_id: int):
        self.master_seed = int(master_seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RandomStream(master_seed={self.master_seed}, stream_id={self.stream_id})"

    def spawn(self, *parts) -> "RandomStream":
        """Child stream whose id is a hash of this stream's id and ``parts``."""
        return RandomStream(self.master_seed, derive_stream_id(self.stream_id, *parts))

    def uniform(self, size=None):
        """Uniforms on [0, 1)."""
        return self._gen.random(size)

    def open_uniform(self, size=None):
        """Uniforms on the open interval (0, 1), on the 2**-53 midpoint lattice."""
        k = self._gen.integers(0, 1 << 53, size=size, dtype=np.int64)
        return (k + 0.5) / _TWO53

    def normal(self, size=None):
        return ndtri(self.open_uniform(size))

    def exponential(self, size=None):
        # 1 - U lies in (0, 1]
        return -np.log1p(-self._gen.random(size))

    def integers(self, high: int, size=None):
        return self._gen.integers(0, high, size=size)


def make_stream(master_seed: int, stream_id: int) -> RandomStream:
    return RandomStream(master_seed, stream_id)


# -- populations -----------------------------------------------------------


@dataclass(frozen=True)
class NormalKnownVar:
    mu: float
    sigma: float = 1.0

    @property
    def mean(self):
        return self.mu

    def sample(self, stream: RandomStream, size):
        z = stream.normal(size)
        return self.mu + self.sigma * z

    def shifted_to(self, mu):
        return NormalKnownVar(mu, self.sigma)


@dataclass(frozen=True)
class NormalExpMixture:
    """N(mu, 1) with probability 0.2, otherwise mu + (Exp(1) - 1)."""

    mu: float
    p_normal: float = 0.2

    @property
    def mean(self):
        return self.mu

    def sample(self, stream: RandomStream, size):
        # one uniform triple per draw keeps prefixes stable when size grows
        shape = (size,) if np.isscalar(size) else tuple(size)
        u = stream.open_uniform(shape + (3,))
        z = ndtri(u[..., 1])
        e = -np.log(u[..., 2]) - 1.0
        return self.mu + np.where(u[..., 0] < self.p_normal, z, e)

    def shifted_to(self, mu):
        return NormalExpMixture(mu, self.p_normal)


@dataclass(frozen=True)
class Empirical:
    data: tuple

    def __init__(self, data: Sequence[float]):
        object.__setattr__(self, "data", tuple(float(x) for x in data))

    @property
    def mean(self):
        return float(np.mean(self.data)) if self.data else float("nan")

    def sample(self, stream: RandomStream, size):
        if not self.data:
            raise SeqInferError("empty resampling support")
        atoms = np.asarray(self.data)
        return atoms[stream.integers(len(atoms), size)]


@dataclass(frozen=True)
class ShiftedEmpirical:
    """Residual distribution shifted to mean ``mu``.

    Residuals are centered once at construction, so the population mean is
    ``mu`` up to the rounding of a single subtraction.
    """

    residuals: tuple
    mu: float = 0.0

    def __init__(self, residuals: Sequence[float], mu: float = 0.0):
        r = np.asarray(residuals, dtype=float)
        if r.size:
            r = r - r.mean()
        object.__setattr__(self, "residuals", tuple(r.tolist()))
        object.__setattr__(self, "mu", float(mu))

    @property
    def mean(self):
        return self.mu

    def sample(self, stream: RandomStream, size):
        if not self.residuals:
            raise SeqInferError("empty resampling support")
        r = np.asarray(self.residuals)
        return self.mu + r[stream.integers(len(r), size)]

    def shifted_to(self, mu):
        new = object.__new__(ShiftedEmpirical)
        object.__setattr__(new, "residuals", self.residuals)
        object.__setattr__(new, "mu", float(mu))
        return new


Population = Union[NormalKnownVar, NormalExpMixture, Empirical, ShiftedEmpirical]


def draw(pop: Population, stream: RandomStream) -> float:
    """One draw from ``pop``."""
    return float(pop.sample(stream, 1)[0])


def draw_many(pop: Population, stream: RandomStream, size) -> np.ndarray:
    return np.asarray(pop.sample(stream, size), dtype=float)


# -- observation maps ------------------------------------------------------


def _identity_lift(x):
    return x[..., None]


def _square_lift(x):
    return np.stack([x, x * x], axis=-1)


@dataclass(frozen=True)
class ObservationMap:
    """Lift of a scalar observation to the d-vector the stopping rule sees."""

    name: str
    d: int
    lift_array: Callable = field(repr=False, compare=False)

    def lift(self, x: float) -> np.ndarray:
        return self.lift_array(np.asarray(float(x)))


IDENTITY_MAP = ObservationMap("identity", 1, _identity_lift)
SQUARE_MAP = ObservationMap("square", 2, _square_lift)

MAPS = {"identity": IDENTITY_MAP, "square": SQUARE_MAP}


def lift_sequence(omap: ObservationMap, xs: Sequence[float]) -> np.ndarray:
    """Apply ``omap`` elementwise; returns an array of shape (len(xs), d)."""
    x = np.asarray(xs, dtype=float).reshape(-1)
    return omap.lift_array(x)
