"""Command-line entry point: ``odabc <subcommand> ...``.

Subcommands: simulate, run, mle-grid, diagnose, variance-report.  Random
seeds are echoed on stderr as ``seed=<value>``; when none is given one is
drawn from system entropy.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from typing import Optional

import numpy as np

from . import diagnostics, io
from .abc import AbcConfig, perturb_dataset
from .errors import OdabcError
from .estimators import choose_N, variance_report
from .mcmc import KINDS, ProposalSpec, run_chain
from .models import MODELS, ModelSpec, ParameterPoint, get_model, simulate_dataset
from .rng import RngStream, fresh_seed

# substream tags kept apart from the chain's per-iteration streams
DATA_STREAM = 1 << 62
NOISE_STREAM = (1 << 62) + 1


def _param(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None


def _floats(text: str) -> tuple:
    try:
        return io._floats(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _echo_seed(seed: int, label: str = "seed") -> None:
    print(f"{label}={seed}", file=sys.stderr)


def _build_model(name: str, params) -> ModelSpec:
    if name not in MODELS:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(sorted(MODELS))}")
    return get_model(name, **dict(params or ()))


def _point(model: ModelSpec, values: tuple, what: str) -> ParameterPoint:
    if len(values) != model.n_coords:
        raise ValueError(f"{what} needs {model.n_coords} values for {model.name} "
                         f"({', '.join(model.coord_names)}), got {len(values)}")
    return model.point(np.asarray(values, dtype=float))


def _load_or_simulate(model, data_path, truth, n, data_seed, seed):
    """Dataset from a CSV path, or simulated at ``truth``.  Returns (data, data_seed)."""
    if data_path:
        data = io.read_dataset(data_path)
        if n:
            if n > data.n:
                raise ValueError(f"n={n} exceeds the {data.n} rows in {data_path}")
            data = data.head(n)
        return data, data_seed
    if not truth or not n:
        raise ValueError("give --data FILE, or --truth and --n to simulate data")
    if data_seed is None:
        data_seed = seed
    data, _ = simulate_dataset(model, _point(model, truth, "--truth"), n,
                               RngStream(data_seed).child(DATA_STREAM))
    return data, data_seed


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(ns) -> int:
    model = _build_model(ns.model, ns.param)
    seed = fresh_seed() if ns.seed is None else ns.seed
    _echo_seed(seed)
    gamma = _point(model, ns.theta + ns.x0, "--theta/--x0")
    data, _ = simulate_dataset(model, gamma, ns.n, RngStream(seed).child(DATA_STREAM))
    meta = {"model": ns.model, "truth": io._fmt_floats(gamma.vector), "n": str(ns.n),
            "data_seed": str(seed)}
    for k, v in sorted(dict(ns.param or ()).items()):
        meta[f"hyper.{k}"] = repr(v)
    if ns.noisy:
        if ns.eps is None:
            raise ValueError("--noisy needs --eps")
        data = perturb_dataset(data, ns.eps, RngStream(seed).child(NOISE_STREAM))
        meta.update(noisy="true", eps=repr(ns.eps), noise_seed=str(seed))
    io.write_dataset(ns.output, data, meta)
    return 0


RUN_KEYS = {f.name for f in fields(io.RunConfig)} - {"hyper"}


def resolve_run_config(ns) -> io.RunConfig:
    """Config file (if any) overridden by flags given on the command line."""
    cfg = io.RunConfig.load(ns.config) if getattr(ns, "config", None) else io.RunConfig()
    given = {k: v for k, v in vars(ns).items() if k in RUN_KEYS and v is not None}
    cfg = replace(cfg, **given)
    if getattr(ns, "param", None):
        cfg = replace(cfg, hyper={**cfg.hyper, **dict(ns.param)})
    return cfg


def execute_run(cfg: io.RunConfig, workers: int = 1):
    """Run the chain described by ``cfg``.

    Returns ``(trace, cfg)`` with the seed, data seed and n filled in, so
    that ``cfg`` replays the run exactly.
    """
    if cfg.seed is None:
        cfg = replace(cfg, seed=fresh_seed())
    model = _build_model(cfg.model, cfg.hyper.items())
    data, data_seed = _load_or_simulate(model, cfg.data, cfg.truth, cfg.n, cfg.data_seed, cfg.seed)
    cfg = replace(cfg, data_seed=data_seed, n=data.n)
    if cfg.noisy:
        if cfg.noise_seed is None:
            cfg = replace(cfg, noise_seed=cfg.seed)
        data = perturb_dataset(data, cfg.eps, RngStream(cfg.noise_seed).child(NOISE_STREAM))
    if cfg.kernel not in KINDS:
        raise ValueError(f"unknown kernel {cfg.kernel!r}; choose from {', '.join(KINDS)}")
    prop = ProposalSpec.for_model(model, cfg.step_sizes)
    init = _point(model, cfg.init, "--init") if cfg.init else None
    trace = run_chain(
        model, data, AbcConfig(cfg.eps, data.obs_dim), cfg.kernel, cfg.n_hits, cfg.trial_cap,
        prop, cfg.iters, cfg.burn_in, cfg.thin, cfg.seed, init=init,
        strict_cap=cfg.strict_cap, zero_start=cfg.zero_start, workers=workers,
    )
    return trace, cfg


def cmd_run(ns) -> int:
    cfg = resolve_run_config(ns)
    if cfg.seed is None:
        cfg = replace(cfg, seed=fresh_seed())
    _echo_seed(cfg.seed)
    if not cfg.output:
        raise ValueError("no output path; pass -o FILE")
    trace, cfg = execute_run(cfg, workers=ns.workers)
    io.write_trace(cfg.output, trace, cfg.to_dict())
    print(f"acceptance_rate={io.format_number(trace.acceptance_rate)}", file=sys.stderr)
    return 0


def cmd_mle_grid(ns) -> int:
    model = _build_model(ns.model, ns.param)
    seed = fresh_seed() if ns.seed is None else ns.seed
    if ns.noisy or not ns.data:
        _echo_seed(seed)
    data, _ = _load_or_simulate(model, ns.data, ns.truth, ns.n, ns.data_seed, seed)
    grid = diagnostics.grid_values(ns.grid)
    res = diagnostics.abc_mle_grid(model, data, ns.eps, grid, ns.noisy,
                                   RngStream(seed).child(NOISE_STREAM),
                                   include_prior=ns.include_prior)
    meta = {"model": ns.model, "eps": repr(ns.eps), "grid": ns.grid, "noisy": str(ns.noisy).lower(),
            "seed": str(seed), "n": str(data.n), "argmax": io.format_number(res.argmax)}
    rows = [{"theta": t, "objective": o} for t, o in zip(res.grid, res.objective)]
    io.write_rows(ns.output or sys.stdout, rows, meta)
    print(f"argmax={io.format_number(res.argmax)}", file=sys.stderr)
    return 0


def cmd_diagnose(ns) -> int:
    trace = io.read_trace(ns.trace)
    s = diagnostics.summarize(trace, ns.max_lag)
    meta = {"trace": ns.trace, "max_lag": str(ns.max_lag)}
    rows = s.rows()
    if ns.alpha_floor is not None:
        rep = diagnostics.cost_report(trace, ns.alpha_floor)
        for r in rows:
            r.update(cost_bound=rep.bound, cost_mean=rep.mean_draws, cost_se=rep.std_error,
                     cost_exceeded=rep.exceeded)
    io.write_rows(ns.output or sys.stdout, rows, meta)
    if ns.acf_out:
        acf_rows = [dict(lag=lag, **{c: s.acf[i, lag] for i, c in enumerate(s.coord_names)})
                    for lag in range(s.acf.shape[1])]
        io.write_rows(ns.acf_out, acf_rows, meta)
    if ns.kde_out:
        kde_rows = []
        for i, c in enumerate(s.coord_names):
            if s.degenerate[i]:
                continue
            x, d = diagnostics.kde_curve(trace.retained()[:, i])
            kde_rows += [{"coord": c, "x": a, "density": b} for a, b in zip(x, d)]
        if kde_rows:
            io.write_rows(ns.kde_out, kde_rows, meta)
    return 0


def cmd_variance_report(ns) -> int:
    alpha = np.asarray(ns.alpha, dtype=float)
    out = sys.stdout
    if ns.n_hits is not None:
        rep = variance_report(alpha, ns.n_hits, ns.beta)
        for k, v in rep.as_dict().items():
            if isinstance(v, bool):
                v = str(v).lower()
            elif isinstance(v, float):
                v = io.format_number(v)
            print(f"{k}={v}", file=out)
    if ns.target_var is not None:
        print(f"chosen_N={choose_N(alpha, ns.target_var)}", file=out)
    if ns.n_hits is None and ns.target_var is None:
        raise ValueError("give --n-hits (report) and/or --target-var (choose N)")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_model_args(p, required=True):
    p.add_argument("--model", required=required, choices=sorted(MODELS),
                   default=None if required else argparse.SUPPRESS,
                   help="model name")
    p.add_argument("--param", type=_param, action="append", metavar="NAME=VALUE",
                   help="model hyperparameter override (repeatable), e.g. sigma=2")


def _add_data_args(p, suppress=False):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--data", default=d, help="dataset CSV (one column y)")
    p.add_argument("--truth", type=_floats, default=d,
                   help="parameter values (all coordinates, comma separated) to simulate data at")
    p.add_argument("--n", type=int, default=d, help="observations to simulate (or keep from --data)")
    p.add_argument("--data-seed", type=int, default=d, help="seed for simulated data (default: --seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odabc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="simulate a dataset from a model")
    _add_model_args(p)
    p.add_argument("--theta", type=_floats, required=True, help="model parameters, comma separated")
    p.add_argument("--x0", type=_floats, default=(), help="initial latent state (if unknown to the model)")
    p.add_argument("--n", type=int, required=True, help="number of observations")
    p.add_argument("--seed", type=int, help="random seed (default: drawn and echoed)")
    p.add_argument("--noisy", action="store_true", help="perturb uniformly within the eps-ball")
    p.add_argument("--eps", type=float, help="tolerance used by --noisy")
    p.add_argument("-o", "--output", required=True, help="output dataset CSV")
    p.set_defaults(func=cmd_simulate)

    S = argparse.SUPPRESS
    p = sub.add_parser("run", help="run an ABC MCMC chain and write its trace CSV",
                       argument_default=S)
    p.add_argument("--config", help="key=value config file (flags override it)")
    _add_model_args(p, required=False)
    p.add_argument("--kernel", choices=KINDS, help="MCMC kernel")
    p.add_argument("--eps", type=float, help="ABC tolerance")
    p.add_argument("--n-hits", dest="n_hits", type=int,
                   help="N: trials per step (ntry) or hits per step (nhit)")
    p.add_argument("--trial-cap", dest="trial_cap", type=int,
                   help="maximum draws per time step for nhit (default 1e6)")
    p.add_argument("--strict-cap", dest="strict_cap", action="store_const", const=True,
                   help="abort instead of rejecting when the trial cap is reached")
    p.add_argument("--iters", type=int, help="number of iterations")
    p.add_argument("--burn-in", dest="burn_in", type=int, help="iterations discarded from summaries")
    p.add_argument("--thin", type=int, help="keep every K-th post-burn-in sample")
    p.add_argument("--seed", type=int, help="random seed (default: drawn and echoed)")
    p.add_argument("--step-sizes", dest="step_sizes", type=_floats,
                   help="random-walk step sizes, one per coordinate or a single shared value")
    p.add_argument("--init", type=_floats, help="starting point (all coordinates)")
    p.add_argument("--zero-start", dest="zero_start", action="store_const", const=True,
                   help="if no start with a positive estimate is found, start from a zero estimate")
    p.add_argument("--noisy", action="store_const", const=True,
                   help="run noisy ABC on uniformly perturbed data")
    p.add_argument("--noise-seed", dest="noise_seed", type=int,
                   help="seed of the noisy-ABC perturbation (default: --seed)")
    _add_data_args(p, suppress=True)
    p.add_argument("--workers", type=int, default=1,
                   help="threads for trial generation (does not change results)")
    p.add_argument("-o", "--output", dest="output", help="output trace CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("mle-grid", help="ABC maximum-likelihood estimate on a parameter grid")
    _add_model_args(p)
    p.add_argument("--eps", type=float, required=True, help="ABC tolerance")
    p.add_argument("--grid", required=True, help="lo:hi:step (inclusive)")
    p.add_argument("--noisy", action="store_true", help="perturb the data once before fitting")
    p.add_argument("--include-prior", action="store_true", help="add the log prior (MAP)")
    p.add_argument("--seed", type=int, help="seed for simulation and perturbation")
    _add_data_args(p)
    p.add_argument("-o", "--output", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_mle_grid)

    p = sub.add_parser("diagnose", help="summarise a trace CSV")
    p.add_argument("--trace", required=True, help="trace CSV written by run")
    p.add_argument("--max-lag", type=int, default=50, help="largest ACF lag")
    p.add_argument("--alpha-floor", type=float,
                   help="certified lower bound on alpha_k; adds the nhit cost check")
    p.add_argument("--acf-out", help="write the ACF table to this CSV")
    p.add_argument("--kde-out", help="write KDE plot data to this CSV")
    p.add_argument("-o", "--output", help="summary CSV (default stdout)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("variance-report", help="variance bounds of the N-hit estimate")
    p.add_argument("--alpha", type=_floats, required=True, help="alpha_1..alpha_n, comma separated")
    p.add_argument("--n-hits", type=int, help="N for the report")
    p.add_argument("--beta", type=float, default=0.5, help="beta in (0,1) for the bound")
    p.add_argument("--target-var", type=float, help="pick the smallest N meeting this variance")
    p.set_defaults(func=cmd_variance_report)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except FileNotFoundError as e:
        print(f"odabc: error: {e}", file=sys.stderr)
        return 1
    except (OdabcError, ValueError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"odabc: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
