"""Splittable random streams and the variate generators the models need.

A :class:`RngStream` is a value: ``(seed, path)``.  Each distinct path names
an independent substream, built on a counter-based Philox generator keyed by
``SeedSequence(seed, spawn_key=path)``.  Handing the same stream to two
consumers yields the same draws, so callers derive children (``child``) for
every independent use.
"""

from __future__ import annotations

import math
import secrets
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "RngStream",
    "StableParams",
    "as_generator",
    "fresh_seed",
    "sample_stable",
    "standard_stable",
    "sample_uniform_ball",
]


@dataclass(frozen=True)
class RngStream:
    """A reproducible substream identified by ``(seed, path)``."""

    seed: int
    path: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *index: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(index))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this substream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def fresh_seed() -> int:
    """Seed drawn from system entropy (callers should echo it for replay)."""
    return secrets.randbits(63)


@dataclass(frozen=True)
class StableParams:
    """Parameters of a stable law S(alpha, beta, scale, location), S1 form."""

    alpha: float
    beta: float = 0.0
    scale: float = 1.0
    location: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"stability index must lie in (0, 2], got {self.alpha}")
        if not -1.0 <= self.beta <= 1.0:
            raise ValueError(f"skewness must lie in [-1, 1], got {self.beta}")
        if not self.scale > 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def standard_stable(alpha, beta, size, gen: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draws from S(alpha, beta, 1, 0).

    Parameterization follows Samorodnitsky & Taqqu (S1); alpha=2 gives
    N(0, 2) and alpha=1, beta=0 the standard Cauchy.
    """
    v = gen.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    w = gen.standard_exponential(size)
    if alpha == 1.0:
        half_pi_bv = 0.5 * math.pi + beta * v
        return (2.0 / math.pi) * (
            half_pi_bv * np.tan(v)
            - beta * np.log((0.5 * math.pi * w * np.cos(v)) / half_pi_bv)
        )
    if beta == 0.0:
        # symmetric branch, B = 0 and S = 1
        return (
            np.sin(alpha * v)
            / np.cos(v) ** (1.0 / alpha)
            * (np.cos(v - alpha * v) / w) ** ((1.0 - alpha) / alpha)
        )
    t = beta * math.tan(0.5 * math.pi * alpha)
    b = math.atan(t) / alpha
    s = (1.0 + t * t) ** (1.0 / (2.0 * alpha))
    avb = alpha * (v + b)
    return (
        s
        * np.sin(avb)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - avb) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_stable(p: StableParams, rng: RngLike, size=None, scale=None):
    """Draw from S(p.alpha, p.beta, scale, p.location).

    ``scale`` overrides ``p.scale`` and may be an array broadcastable to
    ``size`` (used for per-time-step scales in the GARCH model).
    """
    gen = as_generator(rng)
    sc = p.scale if scale is None else np.asarray(scale, dtype=float)
    if size is None and np.ndim(sc):
        size = np.shape(sc)
    x = standard_stable(p.alpha, p.beta, size, gen)
    base = sc * x
    if p.alpha == 1.0 and p.beta != 0.0:
        base = base + (2.0 / math.pi) * p.beta * sc * np.log(sc)
    out = base + p.location
    if size is None:
        return float(out)
    return out


def sample_uniform_ball(center, eps: float, rng: RngLike, size=None) -> np.ndarray:
    """Uniform draws on the open Euclidean ball B_eps(center).

    ``center`` is a vector of length d; output shape is ``size + (d,)``
    (or ``(d,)`` when size is None).  In one dimension this is
    Uniform(center - eps, center + eps).
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    gen = as_generator(rng)
    center = np.atleast_1d(np.asarray(center, dtype=float))
    z = unit_ball(center.shape[-1], size, gen)
    return center + eps * z


def unit_ball(dim: int, size, gen: np.random.Generator) -> np.ndarray:
    """Uniform points strictly inside the unit ball, shape ``size + (dim,)``."""
    shape = () if size is None else (size,) if np.ndim(size) == 0 else tuple(size)
    if dim == 1:
        z = 2.0 * gen.random(shape + (1,)) - 1.0
        # random() lies in [0, 1); -1 exactly is the only boundary value
        bad = z[..., 0] <= -1.0
        while np.any(bad):
            z[bad] = 2.0 * gen.random((int(bad.sum()), 1)) - 1.0
            bad = z[..., 0] <= -1.0
        return z
    g = gen.standard_normal(shape + (dim,))
    r = gen.random(shape) ** (1.0 / dim)
    norm = np.linalg.norm(g, axis=-1)
    return g * (r / norm)[..., None]
