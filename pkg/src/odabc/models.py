"""Observation-driven time series models.

A model couples a deterministic latent recursion ``x' = phi(theta, x, y)``
with an observation kernel that can be *sampled* at a latent state.  The
observation density itself is optional: the ABC machinery only ever draws
from ``obs_sampler``.

Shapes used throughout:

* latent states are vectors of length ``latent_dim``; a latent path has
  shape ``(n + 1, latent_dim)`` holding x_0 .. x_n;
* observations are vectors of length ``obs_dim``; a dataset stores
  ``y`` with shape ``(n, obs_dim)`` holding y_1 .. y_n;
* ``obs_sampler(theta, xs, size, gen)`` takes ``xs`` of shape
  ``(m, latent_dim)`` and returns draws of shape ``(m, size, obs_dim)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special, stats

from .errors import NumericalFailure
from .rng import RngLike, StableParams, as_generator, sample_stable

__all__ = [
    "ParameterPoint",
    "Dataset",
    "ModelSpec",
    "latent_states",
    "latent_path",
    "simulate_dataset",
    "prior_logpdf",
    "prior_sample",
    "normal_means",
    "normal_scale",
    "stable_garch",
    "MODELS",
    "get_model",
    "log_normal_interval",
]


@dataclass(frozen=True)
class ParameterPoint:
    """The pair (theta, x0) a chain samples."""

    theta: np.ndarray
    x0: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)).ravel())

    @property
    def vector(self) -> np.ndarray:
        """Sampled coordinates: theta followed by x0."""
        return np.concatenate([self.theta, self.x0])

    def __eq__(self, other):
        if not isinstance(other, ParameterPoint):
            return NotImplemented
        return np.array_equal(self.theta, other.theta) and np.array_equal(self.x0, other.x0)

    def __hash__(self):
        return hash((self.theta.tobytes(), self.x0.tobytes()))


@dataclass(frozen=True)
class Dataset:
    """Observations y_1..y_n (shape ``(n, obs_dim)``) plus the anchor y_0."""

    y: np.ndarray
    y0: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] < 1:
            raise ValueError("dataset needs at least one observation")
        if not np.all(np.isfinite(y)):
            raise ValueError("dataset contains non-finite values")
        y0 = np.zeros(y.shape[1]) if self.y0 is None else np.atleast_1d(np.asarray(self.y0, float))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y0", y0)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.y.shape[1]

    def __len__(self):
        return self.n

    def head(self, n: int) -> "Dataset":
        return Dataset(self.y[:n], self.y0)


@dataclass(frozen=True)
class ModelSpec:
    """An observation-driven model.

    ``transforms`` tags every sampled coordinate (theta, then x0 unless
    ``x0_known``) with ``"identity"`` or ``"log"``; log coordinates are
    positive and receive log-scale random-walk proposals.  ``path_fn``, when
    given, is a vectorised replacement for iterating ``phi`` and must agree
    with it exactly.
    """

    name: str
    d_theta: int
    obs_dim: int
    latent_dim: int
    x0_known: bool
    transforms: tuple
    prior_logpdf: Callable
    prior_sample: Callable
    phi: Callable
    obs_sampler: Callable
    obs_logdensity: Optional[Callable] = None
    smoothed_logdensity: Optional[Callable] = None
    path_fn: Optional[Callable] = None
    x0_fixed: Optional[np.ndarray] = None
    coord_names: tuple = ()
    hyper: dict = field(default_factory=dict)

    @property
    def n_coords(self) -> int:
        return self.d_theta + (0 if self.x0_known else self.latent_dim)

    def initial_state(self, gamma: ParameterPoint) -> np.ndarray:
        return np.array(self.x0_fixed if self.x0_known else gamma.x0, dtype=float)

    def point(self, vector) -> ParameterPoint:
        """Split a flat coordinate vector into a ParameterPoint."""
        v = np.asarray(vector, dtype=float)
        if v.shape != (self.n_coords,):
            raise ValueError(f"{self.name} expects {self.n_coords} coordinates, got {v.shape}")
        return ParameterPoint(v[: self.d_theta], v[self.d_theta:])

    def check(self, gamma: ParameterPoint) -> None:
        if gamma.theta.shape != (self.d_theta,):
            raise ValueError(f"{self.name}: theta must have length {self.d_theta}")
        want = 0 if self.x0_known else self.latent_dim
        if gamma.x0.shape != (want,):
            raise ValueError(f"{self.name}: x0 must have length {want}")


def latent_states(model: ModelSpec, gamma: ParameterPoint, data: Dataset) -> np.ndarray:
    """Full latent path x_0..x_n, shape ``(n + 1, latent_dim)``.

    Raises NumericalFailure naming the first index whose state is not
    finite.
    """
    model.check(gamma)
    x = model.initial_state(gamma)
    if model.path_fn is not None:
        path = model.path_fn(gamma.theta, x, data.y)
    else:
        path = np.empty((data.n + 1, model.latent_dim))
        path[0] = x
        theta = gamma.theta
        phi = model.phi
        y = data.y
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(data.n):
                x = phi(theta, x, y[k])
                path[k + 1] = x
    finite = np.isfinite(path).all(axis=1)
    if not finite.all():
        # inf/nan propagate through the recursion, so the first bad index is the culprit
        bad = int(np.argmin(finite))
        raise NumericalFailure(bad, path[bad])
    return path


def latent_path(model: ModelSpec, gamma: ParameterPoint, data: Dataset, k: int) -> np.ndarray:
    """Latent state x_{k-1}, i.e. phi composed k-1 times starting at x_0."""
    if not 1 <= k <= data.n + 1:
        raise ValueError(f"k must lie in [1, {data.n + 1}], got {k}")
    if k == 1:
        model.check(gamma)
        return model.initial_state(gamma)
    return latent_states(model, gamma, data.head(k - 1))[k - 1]


def simulate_dataset(model: ModelSpec, gamma: ParameterPoint, n: int, rng: RngLike):
    """Simulate y_1..y_n from the model; returns ``(Dataset, latent path)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    model.check(gamma)
    gen = as_generator(rng)
    x = model.initial_state(gamma)
    path = np.empty((n + 1, model.latent_dim))
    path[0] = x
    ys = np.empty((n, model.obs_dim))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            ys[k] = model.obs_sampler(gamma.theta, x[None, :], 1, gen)[0, 0]
            x = model.phi(gamma.theta, x, ys[k])
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(ys[k]))):
                raise NumericalFailure(k + 1, x)
            path[k + 1] = x
    return Dataset(ys), path


def prior_logpdf(model: ModelSpec, gamma: ParameterPoint) -> float:
    model.check(gamma)
    return float(model.prior_logpdf(gamma))


def prior_sample(model: ModelSpec, rng: RngLike) -> ParameterPoint:
    return model.prior_sample(as_generator(rng))


def log_normal_interval(lo, hi):
    """log(F(hi) - F(lo)) for the standard normal CDF F, elementwise, lo <= hi.

    Intervals in the upper tail are reflected so the subtraction never
    cancels; empty intervals give -inf.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    lb = special.log_ndtr(b)
    la = special.log_ndtr(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lb + np.log(-np.expm1(la - lb))
    return np.where(b > a, out, -np.inf)


def _gamma_logpdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * math.log(rate) - special.gammaln(shape) + (shape - 1) * np.log(x) - rate * x
    return np.where(x > 0, out, -np.inf)


# ---------------------------------------------------------------------------
# builtin models


def _constant_path(theta, x0, y):
    return np.broadcast_to(x0, (y.shape[0] + 1, x0.size))


def normal_means(sigma: float = 1.0, phi: float = 1.0, x0: float = 1.0) -> ModelSpec:
    """Scalar normal means: Y_{k+1} = theta X_k + noise, X_{k+1} = X_k.

    Noise is N(0, sigma^2), X_0 = x0 is known and theta ~ N(0, phi).
    """
    if sigma <= 0 or phi <= 0:
        raise ValueError("sigma and phi must be positive")

    log_norm = -0.5 * math.log(2.0 * math.pi * phi)

    def prior_lp(gamma):
        t = float(gamma.theta[0])
        return log_norm - 0.5 * t * t / phi

    def prior_draw(gen):
        return ParameterPoint([gen.normal(0.0, math.sqrt(phi))])

    def step(theta, x, y):
        return x

    def sampler(theta, xs, size, gen):
        mean = theta[0] * xs[:, 0]
        return (mean[:, None] + sigma * gen.standard_normal((xs.shape[0], size)))[..., None]

    def logdens(theta, xs, y):
        return stats.norm.logpdf(np.asarray(y)[..., 0], theta[0] * xs[..., 0], sigma)

    def smoothed(theta, xs, y, eps):
        y = np.asarray(y)[..., 0]
        mean = theta[0] * xs[..., 0]
        return log_normal_interval((y - eps - mean) / sigma, (y + eps - mean) / sigma) - math.log(2 * eps)

    return ModelSpec(
        name="normal-means",
        d_theta=1,
        obs_dim=1,
        latent_dim=1,
        x0_known=True,
        transforms=("identity",),
        prior_logpdf=prior_lp,
        prior_sample=prior_draw,
        phi=step,
        obs_sampler=sampler,
        obs_logdensity=logdens,
        smoothed_logdensity=smoothed,
        path_fn=_constant_path,
        x0_fixed=np.array([float(x0)]),
        coord_names=("theta",),
        hyper={"sigma": sigma, "phi": phi, "x0": x0},
    )


def normal_scale(a: float = 2.0, b: float = 2.0) -> ModelSpec:
    """Zero-mean normal with unknown variance v: Y_k ~ N(0, v).

    The latent state is a constant placeholder.  Prior v ~ Gamma(a, rate b).
    Unlike the location model, ball smoothing biases the plain ABC
    maximum-likelihood estimate of v, which makes the plain/noisy contrast
    visible.
    """

    def prior_lp(gamma):
        return float(_gamma_logpdf(gamma.theta[0], a, b))

    def prior_draw(gen):
        return ParameterPoint([gen.gamma(a, 1.0 / b)])

    def step(theta, x, y):
        return x

    def sampler(theta, xs, size, gen):
        return (math.sqrt(theta[0]) * gen.standard_normal((xs.shape[0], size)))[..., None]

    def logdens(theta, xs, y):
        y = np.asarray(y)[..., 0]
        return stats.norm.logpdf(y, 0.0, math.sqrt(theta[0])) + 0.0 * xs[..., 0]

    def smoothed(theta, xs, y, eps):
        y = np.asarray(y)[..., 0]
        s = math.sqrt(theta[0])
        return log_normal_interval((y - eps) / s, (y + eps) / s) - math.log(2 * eps) + 0.0 * xs[..., 0]

    return ModelSpec(
        name="normal-scale",
        d_theta=1,
        obs_dim=1,
        latent_dim=1,
        x0_known=True,
        transforms=("log",),
        prior_logpdf=prior_lp,
        prior_sample=prior_draw,
        phi=step,
        obs_sampler=sampler,
        obs_logdensity=logdens,
        smoothed_logdensity=smoothed,
        path_fn=_constant_path,
        x0_fixed=np.array([1.0]),
        coord_names=("v",),
        hyper={"a": a, "b": b},
    )


def stable_garch(
    a: float = 2.0,
    b: float = 0.125,
    c: float = 2.0,
    d: float = 0.125,
    phi1: float = 1.5,
    phi2: float = 0.0,
) -> ModelSpec:
    """GARCH(1,1) recursion with stable observations.

    Y_{k+1} ~ S(phi1, phi2, scale=X_k, location=0) and
    X_{k+1} = beta0 + beta1 X_k + beta2 Y_{k+1}^2, with priors
    X_0 ~ Gamma(a, rate b) and beta_i ~ Gamma(c, rate d).  The observation
    density has no closed form, so only the simulation-based kernels apply.
    """
    law = StableParams(alpha=phi1, beta=phi2)

    def prior_lp(gamma):
        return float(_gamma_logpdf(gamma.x0[0], a, b) + np.sum(_gamma_logpdf(gamma.theta, c, d)))

    def prior_draw(gen):
        theta = gen.gamma(c, 1.0 / d, size=3)
        x0 = gen.gamma(a, 1.0 / b, size=1)
        return ParameterPoint(theta, x0)

    def step(theta, x, y):
        return theta[0] + theta[1] * x + theta[2] * (y * y)

    def sampler(theta, xs, size, gen):
        scale = np.repeat(xs[:, :1], size, axis=1)
        return sample_stable(law, gen, scale=scale)[..., None]

    def path(theta, x0, y):
        # same float64 operations as ``step``, on Python floats
        b0, b1, b2 = (float(t) for t in theta)
        x = float(x0[0])
        out = [x]
        for yk in y[:, 0].tolist():
            x = b0 + b1 * x + b2 * (yk * yk)
            out.append(x)
        return np.array(out)[:, None]

    return ModelSpec(
        name="stable-garch",
        d_theta=3,
        obs_dim=1,
        latent_dim=1,
        x0_known=False,
        transforms=("log", "log", "log", "log"),
        prior_logpdf=prior_lp,
        prior_sample=prior_draw,
        phi=step,
        obs_sampler=sampler,
        path_fn=path,
        coord_names=("beta0", "beta1", "beta2", "x0"),
        hyper={"a": a, "b": b, "c": c, "d": d, "phi1": phi1, "phi2": phi2},
    )


MODELS = {
    "normal-means": normal_means,
    "normal-scale": normal_scale,
    "stable-garch": stable_garch,
}


def get_model(name: str, **hyper) -> ModelSpec:
    """Build a registered model by name with optional hyperparameter overrides."""
    try:
        factory = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**hyper)
