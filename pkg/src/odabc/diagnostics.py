"""Chain summaries, sample comparisons, ABC-MLE grids and cost reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .abc import AbcConfig, perturb_dataset, smoothed_loglik
from .errors import NumericalFailure
from .mcmc import ChainTrace
from .models import Dataset, ModelSpec, ParameterPoint
from .rng import RngLike

__all__ = [
    "ChainSummary",
    "GridMle",
    "CostReport",
    "autocorrelation",
    "effective_sample_size",
    "summarize",
    "ks_two_sample",
    "abc_mle_grid",
    "grid_values",
    "cost_report",
    "kde_curve",
]


def autocorrelation(x, max_lag: int) -> np.ndarray:
    """Mean-centred sample ACF at lags 0..max_lag (biased autocovariance).

    A constant series returns ``[1, nan, nan, ...]``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    max_lag = min(int(max_lag), n - 1)
    c = x - x.mean()
    c0 = float(np.dot(c, c)) / n
    out = np.full(max_lag + 1, np.nan)
    out[0] = 1.0
    if c0 == 0.0:
        return out
    # FFT autocovariance, zero padded to avoid wrap-around
    size = 1 << int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(c, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1] / n
    out[1:] = acov[1:] / c0
    return out


def effective_sample_size(acf: np.ndarray, n: int) -> float:
    """n / (1 + 2 * sum of the leading run of positive lags >= 1)."""
    s = 0.0
    for r in acf[1:]:
        if not r > 0:
            break
        s += r
    return min(float(n), n / (1.0 + 2.0 * s))


@dataclass
class ChainSummary:
    acceptance_rate: float
    n_samples: int
    coord_names: tuple
    mean: np.ndarray
    var: np.ndarray
    acf: np.ndarray  # (coords, lags)
    ess: np.ndarray
    degenerate: np.ndarray
    mean_draws_per_iter: float
    cap_hit_count: int

    def rows(self) -> list:
        """One dict per coordinate, ready for CSV output."""
        out = []
        for i, name in enumerate(self.coord_names):
            out.append({
                "coord": name,
                "mean": self.mean[i],
                "var": self.var[i],
                "ess": self.ess[i],
                "degenerate": int(self.degenerate[i]),
                "acceptance_rate": self.acceptance_rate,
                "mean_draws_per_iter": self.mean_draws_per_iter,
                "cap_hit_count": self.cap_hit_count,
                "n_samples": self.n_samples,
            })
        return out


def summarize(trace: ChainTrace, max_lag: int = 50) -> ChainSummary:
    """Acceptance, moments, ACF and ESS of the retained samples.

    A constant coordinate (e.g. an all-rejected chain) gets ``ess = n``
    and its degenerate flag set; its ACF is nan beyond lag 0.
    """
    s = trace.retained()
    n = s.shape[0]
    if n < 2:
        raise ValueError("need at least two retained samples")
    lags = min(int(max_lag), n - 1)
    k = s.shape[1]
    acf = np.empty((k, lags + 1))
    ess = np.empty(k)
    degenerate = np.zeros(k, dtype=bool)
    for i in range(k):
        acf[i] = autocorrelation(s[:, i], lags)
        if np.isnan(acf[i, 1:]).any():
            degenerate[i] = True
            ess[i] = float(n)
        else:
            ess[i] = effective_sample_size(acf[i], n)
    return ChainSummary(
        acceptance_rate=trace.acceptance_rate,
        n_samples=n,
        coord_names=tuple(trace.coord_names),
        mean=s.mean(axis=0),
        var=s.var(axis=0, ddof=1),
        acf=acf,
        ess=ess,
        degenerate=degenerate,
        mean_draws_per_iter=float(trace.draws.mean()) if trace.draws.size else 0.0,
        cap_hit_count=int(np.count_nonzero(trace.cap_hit)),
    )


def ks_two_sample(a, b) -> float:
    """Largest gap between the two empirical CDFs."""
    a = np.sort(np.ravel(np.asarray(a, dtype=float)))
    b = np.sort(np.ravel(np.asarray(b, dtype=float)))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def kde_curve(x, points: int = 200, grid: Optional[np.ndarray] = None):
    """Gaussian KDE (Silverman bandwidth) evaluated on a grid.

    Returns ``(grid, density)``; the default grid spans the sample range
    padded by three bandwidths.
    """
    x = np.asarray(x, dtype=float)
    kde = stats.gaussian_kde(x, bw_method="silverman")
    if grid is None:
        pad = 3.0 * math.sqrt(float(kde.covariance[0, 0]))
        grid = np.linspace(x.min() - pad, x.max() + pad, points)
    return grid, kde(grid)


# ---------------------------------------------------------------------------
# ABC-MLE on a grid


@dataclass
class GridMle:
    grid: np.ndarray
    objective: np.ndarray
    argmax: float
    noisy: bool
    eps: float
    n: int


TIE_RTOL = 1e-12


def grid_values(spec: str) -> np.ndarray:
    """Parse ``lo:hi:step`` into an inclusive, evenly spaced grid."""
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise ValueError(f"grid must look like lo:hi:step, got {spec!r}") from None
    if not step > 0 or hi < lo:
        raise ValueError("grid needs step > 0 and hi >= lo")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def abc_mle_grid(model: ModelSpec, data: Dataset, eps: float, grid: Sequence[float],
                 noisy: bool = False, rng: RngLike = None, *,
                 include_prior: bool = False, x0=None) -> GridMle:
    """Grid maximiser of (1/n) sum_k log of the smoothed observation density.

    The grid runs over the scalar ``theta`` of a one-parameter model; the
    initial state is the model's fixed x0, or ``x0`` when the model
    samples it.  With ``noisy`` the data are perturbed once, uniformly
    within the eps-ball, before evaluation.  Grid points outside the
    prior's support score -inf.  Ties (within a relative 1e-12) go to the
    smallest grid value.
    """
    if model.smoothed_logdensity is None:
        raise ValueError(f"model {model.name!r} has no analytic smoothed density")
    if model.d_theta != 1:
        raise ValueError("abc_mle_grid handles one-parameter models")
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("grid must be a nonempty 1-d sequence")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    abc = AbcConfig(eps, data.obs_dim)
    if noisy:
        if rng is None:
            raise ValueError("noisy ABC needs a random stream for the perturbation")
        data = perturb_dataset(data, eps, rng)
    if model.x0_known:
        x0 = ()
    elif x0 is None:
        raise ValueError("supply x0 for a model without a fixed initial state")
    obj = np.empty(g.size)
    for i, t in enumerate(g):
        gamma = ParameterPoint([t], x0)
        lp = float(model.prior_logpdf(gamma))
        if lp == -math.inf:  # outside the parameter space
            obj[i] = -math.inf
            continue
        try:
            val = smoothed_loglik(model, gamma, data, abc.eps)
        except NumericalFailure:
            val = -math.inf
        obj[i] = (val + lp if include_prior else val) / data.n
    if not np.any(np.isfinite(obj)):
        raise ValueError("objective is -inf on the whole grid; widen the grid or use a larger eps")
    top = float(np.max(obj))
    # values within rounding of the maximum count as ties; take the smallest
    best = int(np.flatnonzero(obj >= top - TIE_RTOL * abs(top))[0])
    return GridMle(g, obj, float(g[best]), bool(noisy), float(eps), data.n)


# ---------------------------------------------------------------------------
# cost of the N-hit kernel


@dataclass
class CostReport:
    n: int
    N: int
    alpha_floor: float
    bound: float
    mean_draws: float
    std_error: float
    iterations: int
    exceeded: bool
    cap_hit_count: int
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "extra"}
        d.update(self.extra)
        return d


def cost_report(trace: ChainTrace, alpha_floor: float) -> CostReport:
    """Mean draws per proposal against the expected-cost bound n N / alpha_floor.

    Iterations whose proposal was rejected before any simulation (zero
    draws) are left out of the mean.
    """
    if trace.config.get("kernel") != "nhit":
        raise ValueError("cost_report needs a trace from an nhit chain")
    if not 0 < alpha_floor <= 1:
        raise ValueError("alpha_floor must lie in (0, 1]")
    n = int(trace.config["n"])
    N = int(trace.config["n_hits"])
    d = trace.draws[trace.draws > 0].astype(float)
    if d.size == 0:
        raise ValueError("trace contains no simulated proposals")
    mean = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
    bound = n * N / alpha_floor
    return CostReport(n, N, float(alpha_floor), bound, mean, se, int(d.size),
                      mean > bound + 3.0 * se, int(np.count_nonzero(trace.cap_hit)))
