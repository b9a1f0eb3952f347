"""Metropolis-Hastings kernels for the ABC posterior and the chain runner.

Kernels
-------
marginal
    exact smoothed log-likelihood (needs ``model.smoothed_logdensity``).
basic
    one pseudo-observation per step; a proposal survives only if every
    draw lands in its ball.
ntry
    N pseudo-observations per step, hit-fraction estimate.
nhit
    draws until N hits per step, negative-binomial estimate.

The pseudo-marginal kernels keep the auxiliary record of the current state
untouched on rejection; the estimate is never recomputed at a state already
visited.

Random streams: iteration ``t`` uses ``RngStream(seed).child(t)``; its
``child(0)`` drives the proposal and the acceptance uniform, ``child(1)``
the trial blocks.  Initialisation attempt ``r`` uses ``child(0, r)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .abc import AbcConfig, smoothed_loglik
from .errors import CapExceeded, InitializationError, NumericalFailure, UnsupportedKernel
from .estimators import BLOCK_STEPS, DEFAULT_CAP, TrialRecord, nhit_sample, ntry_sample
from .models import Dataset, ModelSpec, ParameterPoint, latent_states
from .rng import RngStream

__all__ = [
    "KINDS",
    "ProposalSpec",
    "ChainState",
    "StepResult",
    "ChainTrace",
    "propose",
    "draw_aux",
    "kernel_step",
    "run_chain",
]

KINDS = ("marginal", "basic", "ntry", "nhit")


@dataclass(frozen=True)
class ProposalSpec:
    """Gaussian random walk on the transformed (identity/log) scale."""

    step_sizes: np.ndarray
    transforms: tuple
    d_theta: int

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.step_sizes, dtype=float))
        if s.shape != (len(self.transforms),):
            raise ValueError(f"need {len(self.transforms)} step sizes, got {s.size}")
        if np.any(s <= 0):
            raise ValueError("step sizes must be positive")
        bad = set(self.transforms) - {"identity", "log"}
        if bad:
            raise ValueError(f"unknown transforms {sorted(bad)}")
        object.__setattr__(self, "step_sizes", s)
        object.__setattr__(self, "transforms", tuple(self.transforms))

    @classmethod
    def for_model(cls, model: ModelSpec, step_sizes) -> "ProposalSpec":
        s = np.atleast_1d(np.asarray(step_sizes, dtype=float))
        if s.size == 1 and model.n_coords > 1:
            s = np.full(model.n_coords, float(s[0]))
        return cls(s, model.transforms, model.d_theta)

    @property
    def log_mask(self) -> np.ndarray:
        return np.array([t == "log" for t in self.transforms])


def propose(spec: ProposalSpec, gamma: ParameterPoint, rng) -> tuple:
    """Return ``(gamma', log q(gamma', gamma) - log q(gamma, gamma'))``.

    For log coordinates the walk is on log(gamma); the proposal-density
    ratio then reduces to sum(log gamma'_i - log gamma_i) over them.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    v = gamma.vector
    mask = spec.log_mask
    if np.any(v[mask] <= 0):
        raise ValueError("log-scale coordinates must be positive")
    z = np.where(mask, np.log(np.where(mask, v, 1.0)), v)
    z_new = z + spec.step_sizes * gen.standard_normal(v.size)
    with np.errstate(over="ignore"):
        v_new = np.where(mask, np.exp(z_new), z_new)
    correction = float(np.sum(z_new[mask] - z[mask]))
    return ParameterPoint(v_new[: spec.d_theta], v_new[spec.d_theta:]), correction


@dataclass(frozen=True)
class ChainState:
    gamma: ParameterPoint
    log_prior: float
    log_estimate: float
    aux: Optional[TrialRecord]
    kind: str


@dataclass(frozen=True)
class StepResult:
    state: ChainState
    accepted: bool
    cost: int
    cap_hit: bool = False
    numeric_failure: bool = False


def draw_aux(kind, model, gamma, data, abc, N, cap, rng, *, path=None,
             block_steps=BLOCK_STEPS, executor=None):
    """Estimate (or, for marginal, compute) the log-likelihood at ``gamma``.

    Returns ``(log_estimate, aux_record_or_None, draws_used)``.
    """
    if path is None:
        path = latent_states(model, gamma, data)
    if kind == "marginal":
        return smoothed_loglik(model, gamma, data, abc.eps, path=path), None, 0
    opts = dict(path=path, block_steps=block_steps, executor=executor)
    if kind == "basic":
        rec = ntry_sample(model, gamma, data, abc, 1, rng, **opts)
        rec = TrialRecord("basic", rec.per_step, 1, rec.log_estimate, rec.total_draws)
    elif kind == "ntry":
        rec = ntry_sample(model, gamma, data, abc, N, rng, **opts)
    elif kind == "nhit":
        rec = nhit_sample(model, gamma, data, abc, N, cap, rng, **opts)
    else:
        raise ValueError(f"unknown kernel {kind!r}; choose from {KINDS}")
    return rec.log_estimate, rec, rec.total_draws


def _check_kind(kind, model):
    if kind not in KINDS:
        raise ValueError(f"unknown kernel {kind!r}; choose from {KINDS}")
    if kind == "marginal" and model.smoothed_logdensity is None:
        raise UnsupportedKernel(
            f"model {model.name!r} has no analytic smoothed density; use basic, ntry or nhit"
        )


def kernel_step(kind: str, state: ChainState, model: ModelSpec, data: Dataset, abc: AbcConfig,
                N: int, cap: int, prop: ProposalSpec, rng: RngStream, *,
                strict_cap: bool = False, block_steps: int = BLOCK_STEPS,
                executor=None) -> StepResult:
    """One Metropolis-Hastings transition of the given kernel."""
    _check_kind(kind, model)
    gen = rng.child(0).generator()
    gamma_new, log_q = propose(prop, state.gamma, gen)
    log_u = math.log(gen.random())

    if not np.all(np.isfinite(gamma_new.vector)):
        return StepResult(state, False, 0, numeric_failure=True)
    lp_new = float(model.prior_logpdf(gamma_new))
    if not lp_new > -math.inf:
        return StepResult(state, False, 0)
    try:
        path = latent_states(model, gamma_new, data)
    except NumericalFailure:
        return StepResult(state, False, 0, numeric_failure=True)

    est_new, aux_new, cost = draw_aux(kind, model, gamma_new, data, abc, N, cap, rng.child(1),
                                      path=path, block_steps=block_steps, executor=executor)
    if aux_new is not None and aux_new.cap_hit:
        if strict_cap:
            raise CapExceeded(f"a time step needed more than {cap} draws for {N} hits")
        return StepResult(state, False, cost, cap_hit=True)
    if est_new == -math.inf:
        return StepResult(state, False, cost)

    log_ratio = (est_new - state.log_estimate) + (lp_new - state.log_prior) + log_q
    if log_u < log_ratio:
        return StepResult(ChainState(gamma_new, lp_new, est_new, aux_new, kind), True, cost)
    return StepResult(state, False, cost)


@dataclass
class ChainTrace:
    """Per-iteration record of a chain run.

    ``samples[t]`` holds the state after iteration t+1; ``draws[t]`` the
    pseudo-observations simulated for that iteration's proposal.
    """

    accepted: np.ndarray
    log_est: np.ndarray
    draws: np.ndarray
    cap_hit: np.ndarray
    samples: np.ndarray
    coord_names: tuple
    config: dict = field(default_factory=dict)
    burn_in: int = 0
    thin: int = 1
    numeric_failures: int = 0
    init_attempts: int = 1
    zero_start: bool = False

    @property
    def iterations(self) -> int:
        return self.accepted.size

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if self.accepted.size else 0.0

    def retained(self) -> np.ndarray:
        """Post-burn-in samples, thinned; shape ``(kept, n_coords)``."""
        return self.samples[self.burn_in :: self.thin]

    def column(self, name: str) -> np.ndarray:
        return self.retained()[:, self.coord_names.index(name)]


def _initial_state(kind, model, data, abc, N, cap, root, init, retries, block_steps, executor,
                   zero_start=False):
    first = None
    for r in range(retries):
        stream = root.child(0, r)
        gamma = init if init is not None else model.prior_sample(stream.child(0).generator())
        lp = float(model.prior_logpdf(gamma))
        if lp == -math.inf:
            continue
        if first is None:
            first = ChainState(gamma, lp, -math.inf, None, kind)
        try:
            est, aux, _ = draw_aux(kind, model, gamma, data, abc, N, cap, stream.child(1),
                                   block_steps=block_steps, executor=executor)
        except NumericalFailure:
            continue
        if est == -math.inf or (aux is not None and aux.cap_hit):
            continue
        return ChainState(gamma, lp, est, aux, kind), r + 1
    if zero_start and first is not None:
        return first, retries
    raise InitializationError(
        f"no initial state with a finite {kind} estimate after {retries} attempts; "
        "try a larger eps, a larger N (or trial cap), or an explicit starting point"
    )


def run_chain(model: ModelSpec, data: Dataset, abc: AbcConfig, kind: str, N: int,
              cap: int, prop: ProposalSpec, iterations: int, burn_in: int = 0,
              thin: int = 1, seed: int = 0, *, init: Optional[ParameterPoint] = None,
              init_retries: int = 100, strict_cap: bool = False,
              block_steps: int = BLOCK_STEPS, workers: int = 1,
              zero_start: bool = False, config: Optional[dict] = None) -> ChainTrace:
    """Run ``iterations`` kernel steps from a prior draw (or ``init``).

    The start needs a finite likelihood estimate; up to ``init_retries``
    attempts are made (fresh prior draws, or fresh auxiliary draws at
    ``init``).  With ``zero_start`` a chain whose attempts all fail starts
    instead at the first in-support point with a zero estimate, and the
    first proposal with a positive estimate is accepted.  Otherwise
    InitializationError is raised.
    """
    _check_kind(kind, model)
    if not iterations > burn_in >= 0:
        raise ValueError("need iterations > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be at least 1")
    if kind in ("ntry", "nhit") and N < (2 if kind == "nhit" else 1):
        raise ValueError(f"N={N} is too small for the {kind} kernel")
    if cap is None:
        cap = DEFAULT_CAP
    root = RngStream(seed)
    executor = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        state, attempts = _initial_state(kind, model, data, abc, N, cap, root, init,
                                         init_retries, block_steps, executor, zero_start)
        started_at_zero = state.log_estimate == -math.inf
        accepted = np.zeros(iterations, dtype=bool)
        log_est = np.empty(iterations)
        draws = np.zeros(iterations, dtype=np.int64)
        cap_hit = np.zeros(iterations, dtype=bool)
        samples = np.empty((iterations, model.n_coords))
        failures = 0
        for t in range(iterations):
            res = kernel_step(kind, state, model, data, abc, N, cap, prop, root.child(t + 1),
                              strict_cap=strict_cap, block_steps=block_steps, executor=executor)
            state = res.state
            accepted[t] = res.accepted
            log_est[t] = state.log_estimate
            draws[t] = res.cost
            cap_hit[t] = res.cap_hit
            failures += res.numeric_failure
            samples[t] = state.gamma.vector
    finally:
        if executor is not None:
            executor.shutdown()

    cfg = {
        "model": model.name,
        "kernel": kind,
        "eps": abc.eps,
        "n_hits": N,
        "trial_cap": cap,
        "iters": iterations,
        "burn_in": burn_in,
        "thin": thin,
        "seed": seed,
        "n": data.n,
    }
    if zero_start:
        cfg["zero_start"] = True
    if config:
        cfg.update(config)
    names = model.coord_names or tuple(f"c{i}" for i in range(model.n_coords))
    return ChainTrace(accepted, log_est, draws, cap_hit, samples, tuple(names), cfg,
                      burn_in, thin, failures, attempts, started_at_zero)
