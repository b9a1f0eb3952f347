"""Unbiased likelihood estimators and their variance/cost formulas.

Two estimators of the ABC likelihood p^eps(y_{1:n}) are provided:

* N-try: N pseudo-observations per step, estimate prod_k h_k / (N * vol);
* N-hit: draw until N pseudo-observations land in the ball, estimate
  prod_k (N - 1) / (vol * (m_k - 1)) where m_k counts every draw up to and
  including the N-th hit.  m_k is negative binomial, and
  E[1 / (m_k - 1)] = alpha_k / (N - 1) makes the product unbiased.

Trial generation is vectorised over blocks of ``block_steps`` time steps.
With an :class:`~odabc.rng.RngStream`, block ``j`` draws from substream
``rng.child(j)``, so results do not depend on how many workers process the
blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .abc import AbcConfig, in_ball
from .models import Dataset, ModelSpec, ParameterPoint, latent_states
from .rng import RngLike, RngStream, as_generator

__all__ = [
    "TrialRecord",
    "VarianceReport",
    "ntry_sample",
    "nhit_sample",
    "ntry_log_estimate",
    "nhit_log_estimate",
    "variance_report",
    "choose_N",
    "prop3_threshold",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 10**6
BLOCK_STEPS = 64
# upper bound on pseudo-observations held in memory per block and round
MAX_BATCH = 1 << 21
# N-hit batch width as a multiple of the expected remaining draws
GROWTH = 0.5


@dataclass(frozen=True)
class TrialRecord:
    """Auxiliary outcome of one estimator draw.

    ``per_step`` holds hit counts h_k (ntry) or trial counts m_k (nhit).
    """

    kind: str
    per_step: np.ndarray
    N: int
    log_estimate: float
    total_draws: int
    cap_hit: bool = False


def _map_blocks(fn, n, block_steps, rng, executor):
    """Apply ``fn(start, stop, gen)`` to each block of steps, in block order."""
    starts = list(range(0, n, block_steps))
    if isinstance(rng, RngStream):
        def task(j):
            a = starts[j]
            return fn(a, min(a + block_steps, n), rng.child(j).generator())

        if executor is not None and len(starts) > 1:
            return list(executor.map(task, range(len(starts))))
        return [task(j) for j in range(len(starts))]
    gen = as_generator(rng)
    return [fn(a, min(a + block_steps, n), gen) for a in starts]


def ntry_log_estimate(h, N: int, abc: AbcConfig) -> float:
    h = np.asarray(h)
    if np.any(h == 0):
        return -math.inf
    return float(np.sum(np.log(h)) - h.size * (math.log(N) + abc.log_ball_volume))


def ntry_sample(model: ModelSpec, gamma: ParameterPoint, data: Dataset, abc: AbcConfig,
                N: int, rng: RngLike, *, path: Optional[np.ndarray] = None,
                block_steps: int = BLOCK_STEPS, executor=None) -> TrialRecord:
    """N draws per step at x_{k-1}; h_k counts those inside B_eps(y_k)."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if path is None:
        path = latent_states(model, gamma, data)
    theta = gamma.theta
    eps = abc.eps

    def block(a, b, gen):
        xs = path[a:b]
        y = data.y[a:b, None, :]
        hits = np.zeros(b - a, dtype=np.int64)
        per_round = max(1, MAX_BATCH // (b - a))
        done = 0
        while done < N:
            size = min(per_round, N - done)
            u = model.obs_sampler(theta, xs, size, gen)
            hits += np.count_nonzero(in_ball(u, y, eps), axis=1)
            done += size
        return hits

    h = np.concatenate(_map_blocks(block, data.n, block_steps, rng, executor))
    return TrialRecord("ntry", h, N, ntry_log_estimate(h, N, abc), data.n * N)


def nhit_log_estimate(m, N: int, abc: AbcConfig) -> float:
    """sum_k [log(N - 1) - log vol(B_eps) - log(m_k - 1)]."""
    m = np.asarray(m)
    if N < 2:
        raise ValueError("N must be at least 2")
    if np.any(m < N):
        raise ValueError(f"trial counts must be at least N={N}")
    return float(m.size * (math.log(N - 1) - abc.log_ball_volume) - np.sum(np.log(m - 1.0)))


def _first_n_hits(model, theta, xs, y, eps, N, cap, gen):
    """Trial counts until the N-th hit for each row of ``xs``.

    Each round gives every unfinished row its own batch width, sized from
    its hit rate so far, and draws all batches as one flat array.  The
    widths depend only on earlier draws, so m is the index of the N-th hit
    in an i.i.d. sequence.  Returns (m, capped) arrays.
    """
    rows = xs.shape[0]
    m = np.full(rows, cap, dtype=np.int64)
    capped = np.zeros(rows, dtype=bool)
    hits = np.zeros(rows, dtype=np.int64)
    drawn = np.zeros(rows, dtype=np.int64)
    active = np.arange(rows)
    width = np.full(rows, min(2 * N, cap), dtype=np.int64)
    while active.size:
        w = np.minimum(width[active], cap - drawn[active])
        total = int(w.sum())
        if total > MAX_BATCH:
            w = np.maximum(1, (w * (MAX_BATCH / total)).astype(np.int64))
        owner = np.repeat(np.arange(active.size), w)
        u = model.obs_sampler(theta, xs[active][owner], 1, gen)[:, 0, :]
        inside = in_ball(u, y[active][owner], eps)
        starts = np.cumsum(w) - w
        cnt = np.add.reduceat(inside.astype(np.int64), starts)
        want = N - hits[active]
        finished = cnt >= want
        if np.any(finished):
            hit_at = np.flatnonzero(inside)
            before = np.cumsum(cnt) - cnt
            f = finished
            pos = hit_at[before[f] + want[f] - 1] - starts[f]
            m[active[f]] = drawn[active[f]] + pos + 1
        hits[active] += cnt
        drawn[active] += w
        active = active[~finished]
        over = drawn[active] >= cap
        capped[active[over]] = True
        active = active[~over]
        if active.size:
            rate = (hits[active] + 0.5) / (drawn[active] + 1.0)
            need = (N - hits[active]) / rate
            width[active] = np.ceil(GROWTH * need).astype(np.int64) + 1
    return m, capped


def nhit_sample(model: ModelSpec, gamma: ParameterPoint, data: Dataset, abc: AbcConfig,
                N: int, cap: int = DEFAULT_CAP, rng: RngLike = None, *,
                path: Optional[np.ndarray] = None, block_steps: int = BLOCK_STEPS,
                executor=None) -> TrialRecord:
    """Sequential draws per step until the N-th hit; m_k counts all draws.

    A step that reaches ``cap`` draws without N hits keeps m_k = cap and
    sets ``cap_hit`` on the record.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if cap < N:
        raise ValueError("cap must be at least N")
    if rng is None:
        raise ValueError("nhit_sample needs a random stream")
    if path is None:
        path = latent_states(model, gamma, data)
    theta = gamma.theta

    def block(a, b, gen):
        return _first_n_hits(model, theta, path[a:b], data.y[a:b], abc.eps, N, cap, gen)

    parts = _map_blocks(block, data.n, block_steps, rng, executor)
    m = np.concatenate([p[0] for p in parts])
    capped = bool(np.any(np.concatenate([p[1] for p in parts])))
    return TrialRecord("nhit", m, N, nhit_log_estimate(m, N, abc), int(m.sum()), capped)


# ---------------------------------------------------------------------------
# variance and cost formulas


@dataclass(frozen=True)
class VarianceReport:
    n: int
    N: int
    beta: float
    prop3_bound: float
    prop3_valid: bool
    exact_bound: float
    ntry_relvar: float
    var_ntry: float
    var_nhit_bound: float
    prefer_nhit: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def prop3_threshold(n: int, beta: float) -> int:
    """Smallest admissible N: max(3, ceil(2n / (1 - beta))).

    beta is read through its decimal repr so that e.g. 0.9 is exactly 9/10.
    """
    b = Fraction(repr(float(beta)))
    return max(3, math.ceil(Fraction(2 * n) / (1 - b)))


def _check_alpha(alpha) -> np.ndarray:
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.size < 1:
        raise ValueError("need at least one alpha_k")
    if np.any(a <= 0) or np.any(a > 1):
        raise ValueError("every alpha_k must lie in (0, 1]")
    return a


def variance_report(alpha, N: int, beta: float) -> VarianceReport:
    """Relative-variance bounds for the N-hit estimate and the N-try comparison.

    ``exact_bound`` is (N-1)^{2n}[((N-1)(N-2))^{-n} - (N-1)^{-2n}], written
    as ((N-1)/(N-2))^n - 1.  ``ntry_relvar`` is the relative second moment
    of the hit-fraction product, prod_k[1/(alpha_k N) + (N-1)/N] - 1.  The
    single-observation fields use alpha_1.
    """
    a = _check_alpha(alpha)
    if N < 3:
        raise ValueError("N must be at least 3")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    n = a.size
    exact = math.expm1(n * math.log1p(1.0 / (N - 2)))
    ntry = math.expm1(float(np.sum(np.log1p((1.0 - a) / (a * N)))))
    a1 = float(a[0])
    return VarianceReport(
        n=n,
        N=N,
        beta=beta,
        prop3_bound=n / (beta * N),
        prop3_valid=N >= prop3_threshold(n, beta),
        exact_bound=exact,
        ntry_relvar=ntry,
        var_ntry=a1 * (1.0 - a1) / N,
        var_nhit_bound=a1 * a1 / (N - 2),
        prefer_nhit=N / (N - 2) <= (1.0 - a1) / a1,
    )


def _log_selection_lhs(log_alpha_sum: float, n: int, N: int) -> float:
    # (prod alpha^2) (N-1)^{-2n} [((N-1)/(N-2))^n - 1]
    return 2.0 * log_alpha_sum - 2 * n * math.log(N - 1) + math.log(math.expm1(n * math.log1p(1.0 / (N - 2))))


def choose_N(alpha, target_var: float) -> int:
    """Smallest N >= 3 whose N-hit variance term is at most ``target_var``.

    The term (prod alpha_k^2)(((N-1)(N-2))^{-n} - (N-1)^{-2n}) decreases in
    N; exponential search brackets the answer and bisection finds it.
    Comparisons are in log space with a 1e-12 slack for rounding at equality.
    """
    a = _check_alpha(alpha)
    if not target_var > 0:
        raise ValueError("target_var must be positive")
    n = a.size
    las = float(np.sum(np.log(a)))
    log_t = math.log(target_var) + 1e-12

    def ok(N):
        return _log_selection_lhs(las, n, N) <= log_t

    if ok(3):
        return 3
    lo, hi = 3, 4
    while not ok(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
