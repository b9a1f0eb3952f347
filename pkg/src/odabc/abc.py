"""Tolerance-ball machinery: volumes, smoothing, noisy-ABC perturbation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .models import Dataset, ModelSpec, ParameterPoint, latent_states, log_normal_interval
from .rng import RngLike, RngStream, as_generator, unit_ball

__all__ = [
    "AbcConfig",
    "AlphaEstimate",
    "ball_volume",
    "log_ball_volume",
    "in_ball",
    "perturb_dataset",
    "smoothed_loglik_normal",
    "smoothed_loglik",
    "alpha_mc",
    "alpha_profile",
]


def log_ball_volume(eps: float, dim: int) -> float:
    """log of the Lebesgue volume of B_eps(0) in ``dim`` dimensions."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if dim < 1:
        raise ValueError("dim must be positive")
    if dim == 1:
        return math.log(2.0 * eps)
    return 0.5 * dim * math.log(math.pi) - special.gammaln(0.5 * dim + 1.0) + dim * math.log(eps)


def ball_volume(eps: float, dim: int) -> float:
    if dim == 1:
        return 2.0 * eps
    if dim == 2:
        return math.pi * eps * eps
    return math.exp(log_ball_volume(eps, dim))


@dataclass(frozen=True)
class AbcConfig:
    eps: float
    obs_dim: int = 1

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.obs_dim < 1:
            raise ValueError("obs_dim must be positive")

    @property
    def log_ball_volume(self) -> float:
        return log_ball_volume(self.eps, self.obs_dim)


def in_ball(u: np.ndarray, y: np.ndarray, eps: float) -> np.ndarray:
    """Strict membership |u - y| < eps over the trailing (observation) axis."""
    diff = u - y
    if diff.shape[-1] == 1:
        return np.abs(diff[..., 0]) < eps
    return np.einsum("...i,...i->...", diff, diff) < eps * eps


def perturb_dataset(data: Dataset, eps: float, rng: RngLike) -> Dataset:
    """Noisy-ABC data: y_k + eps * Z_k with Z_k uniform on the unit ball."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    z = unit_ball(data.obs_dim, data.n, as_generator(rng))
    return Dataset(data.y + eps * z, data.y0)


def smoothed_loglik_normal(theta: float, sigma: float, eps: float, data: Dataset) -> float:
    """Exact ABC log-likelihood of i.i.d. N(theta, sigma^2) data, volume 2*eps."""
    if not (sigma > 0 and eps > 0):
        raise ValueError("sigma and eps must be positive")
    y = data.y[:, 0]
    terms = log_normal_interval((y - eps - theta) / sigma, (y + eps - theta) / sigma)
    return float(np.sum(terms) - data.n * math.log(2.0 * eps))


def smoothed_loglik(model: ModelSpec, gamma: ParameterPoint, data: Dataset, eps: float,
                    path: np.ndarray | None = None) -> float:
    """Sum over k of the model's smoothed log-density along the latent path."""
    if model.smoothed_logdensity is None:
        raise ValueError(f"model {model.name!r} has no analytic smoothed density")
    if path is None:
        path = latent_states(model, gamma, data)
    return float(np.sum(model.smoothed_logdensity(gamma.theta, path[:-1], data.y, eps)))


@dataclass(frozen=True)
class AlphaEstimate:
    value: float
    std_error: float
    trials: int
    hits: int


def _count_hits(model, theta, x, yk, eps, trials, rng, block):
    hits = 0
    done = 0
    j = 0
    gen = None if isinstance(rng, RngStream) else as_generator(rng)
    while done < trials:
        size = min(block, trials - done)
        g = rng.child(j).generator() if gen is None else gen
        u = model.obs_sampler(theta, x[None, :], size, g)[0]
        hits += int(np.count_nonzero(in_ball(u, yk, eps)))
        done += size
        j += 1
    return hits


def _estimate(hits, trials):
    v = hits / trials
    return AlphaEstimate(v, math.sqrt(v * (1.0 - v) / trials), trials, hits)


def alpha_mc(model: ModelSpec, gamma: ParameterPoint, data: Dataset, k: int,
             abc: AbcConfig, trials: int, rng: RngLike,
             block: int = 1 << 18) -> AlphaEstimate:
    """Monte Carlo hit frequency of B_eps(y_k) under the sampler at x_{k-1}.

    A test/diagnostic oracle; the chains never call it.  With an RngStream,
    block ``j`` of draws uses substream ``rng.child(j)``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 1 <= k <= data.n:
        raise ValueError(f"k must lie in [1, {data.n}]")
    path = latent_states(model, gamma, data.head(k))
    hits = _count_hits(model, gamma.theta, path[k - 1], data.y[k - 1], abc.eps, trials, rng, block)
    return _estimate(hits, trials)


def alpha_profile(model: ModelSpec, gamma: ParameterPoint, data: Dataset, abc: AbcConfig,
                  trials: int, rng: RngStream, block: int = 1 << 18) -> list:
    """alpha_mc at every time step; step k uses substream ``rng.child(k)``."""
    path = latent_states(model, gamma, data)
    return [
        _estimate(_count_hits(model, gamma.theta, path[k - 1], data.y[k - 1], abc.eps,
                              trials, rng.child(k), block), trials)
        for k in range(1, data.n + 1)
    ]
