"""Run configuration, dataset ingestion and CSV emission.

Every CSV written here starts with ``# key=value`` comment lines carrying
the configuration, so a file documents how it was produced.  Numbers are
written with 12 significant digits (``%.12g``); config values use ``repr``
so that parsing them back is exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .mcmc import ChainTrace
from .models import Dataset

__all__ = [
    "RunConfig",
    "parse_config_text",
    "format_number",
    "ingest_returns",
    "read_dataset",
    "write_dataset",
    "write_trace",
    "read_trace",
    "write_rows",
    "read_header",
]

NUMBER_FORMAT = "%.12g"
TRACE_COLUMNS = ("iter", "accepted", "log_est", "draws", "cap_hit")


def format_number(x) -> str:
    return NUMBER_FORMAT % x


# ---------------------------------------------------------------------------
# configuration


def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    def parse(text):
        return None if text.strip() in ("", "None") else conv(text)
    return parse


def _fmt_floats(v) -> str:
    return ",".join(repr(float(x)) for x in v)


@dataclass
class RunConfig:
    """Everything needed to reproduce a chain run.

    Data come from ``data`` (a CSV path) or, when it is empty, from a
    synthetic draw at ``truth`` with ``n`` observations and ``data_seed``.
    Hyperparameter overrides live in ``hyper`` and serialize as
    ``hyper.<name>=value``.
    """

    model: str = "normal-means"
    kernel: str = "nhit"
    eps: float = 1.0
    n_hits: int = 10
    trial_cap: int = 10**6
    iters: int = 1000
    burn_in: int = 0
    thin: int = 1
    seed: Optional[int] = None
    step_sizes: tuple = (1.0,)
    init: tuple = ()
    strict_cap: bool = False
    zero_start: bool = False
    noisy: bool = False
    noise_seed: Optional[int] = None
    data: str = ""
    truth: tuple = ()
    n: int = 0
    data_seed: Optional[int] = None
    output: str = ""
    hyper: dict = field(default_factory=dict)

    _PARSERS = {
        "model": str,
        "kernel": str,
        "eps": float,
        "n_hits": int,
        "trial_cap": int,
        "iters": int,
        "burn_in": int,
        "thin": int,
        "seed": _optional(int),
        "step_sizes": _floats,
        "init": _floats,
        "strict_cap": _bool,
        "zero_start": _bool,
        "noisy": _bool,
        "noise_seed": _optional(int),
        "data": str,
        "truth": _floats,
        "n": int,
        "data_seed": _optional(int),
        "output": str,
    }

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "hyper":
                for k in sorted(v):
                    d[f"hyper.{k}"] = repr(float(v[k]))
            elif isinstance(v, tuple):
                d[f.name] = _fmt_floats(v)
            elif isinstance(v, bool):
                d[f.name] = "true" if v else "false"
            elif isinstance(v, float):
                d[f.name] = repr(v)
            elif v is None:
                d[f.name] = "None"
            else:
                d[f.name] = str(v)
        return d

    def serialize(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        kw = {}
        hyper = {}
        for key, raw in d.items():
            if key.startswith("result."):
                continue  # run outcomes echoed into output headers
            if key.startswith("hyper."):
                hyper[key[len("hyper."):]] = float(raw)
                continue
            if key not in cls._PARSERS:
                raise ValueError(f"unknown config key {key!r}")
            try:
                kw[key] = cls._PARSERS[key](raw)
            except ValueError as e:
                raise ValueError(f"bad value for {key}: {raw!r} ({e})") from None
        return cls(hyper=hyper, **kw)

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        return cls.from_dict(parse_config_text(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        text = p.read_text()
        if text.startswith("#"):
            # an output CSV: its commented header is the config
            return cls.from_dict(read_header(p))
        return cls.parse(text)


def parse_config_text(text: str) -> dict:
    """key=value lines; blank lines and lines starting with '#' are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, value = s.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


def _header_lines(meta: dict) -> list:
    return [f"# {k}={v}\n" for k, v in meta.items()]


def read_header(path) -> dict:
    """Config dict from the leading ``# key=value`` lines of a CSV."""
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
    return meta


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"file not found: {p}")
    return p


# ---------------------------------------------------------------------------
# datasets


def ingest_returns(path, mode: str = "returns") -> Dataset:
    """Read one number per line (optionally below a single header line).

    ``mode="prices"`` converts prices p_t to log-returns log(p_t / p_{t-1}).
    """
    if mode not in ("returns", "prices"):
        raise ValueError("mode must be 'returns' or 'prices'")
    p = _require_file(path)
    values = []
    header_seen = False
    with open(p) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                v = float(s)
            except ValueError:
                if not values and not header_seen:
                    header_seen = True
                    continue
                raise DataError(f"{p}:{lineno}: not a number: {s!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{p}:{lineno}: non-finite value {s!r}")
            if mode == "prices" and v <= 0:
                raise DataError(f"{p}:{lineno}: price must be positive, got {s}")
            values.append(v)
    x = np.array(values, dtype=float)
    if mode == "prices":
        if x.size < 2:
            raise DataError(f"{p}: need at least 2 prices, got {x.size}")
        x = np.diff(np.log(x))
    elif x.size < 1:
        raise DataError(f"{p}: no data values")
    return Dataset(x[:, None])


def write_dataset(path, data: Dataset, meta: Optional[dict] = None) -> None:
    d = data.obs_dim
    cols = ["y"] if d == 1 else [f"y{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        fh.writelines(_header_lines(meta or {}))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in data.y:
            w.writerow([format_number(v) for v in row])


def read_dataset(path) -> Dataset:
    """Dataset CSV: optional comment header, a column header, numeric rows."""
    p = _require_file(path)
    rows = []
    with open(p) as fh:
        lines = [(i, ln) for i, ln in enumerate(fh, 1) if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise DataError(f"{p}: empty dataset")
    start = 0
    try:
        [float(v) for v in lines[0][1].split(",")]
    except ValueError:
        start = 1
    for lineno, line in lines[start:]:
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise DataError(f"{p}:{lineno}: malformed row {line.strip()!r}") from None
    if not rows:
        raise DataError(f"{p}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise DataError(f"{p}: rows have differing column counts")
    return Dataset(np.array(rows))


# ---------------------------------------------------------------------------
# traces and tables


def write_trace(path, trace: ChainTrace, meta: Optional[dict] = None) -> None:
    """Trace CSV: iter, accepted, log_est, draws, cap_hit, then coordinates."""
    header = dict(meta) if meta is not None else {k: str(v) for k, v in trace.config.items()}
    header.setdefault("result.init_attempts", str(trace.init_attempts))
    header.setdefault("result.numeric_failures", str(trace.numeric_failures))
    with open(path, "w", newline="") as fh:
        fh.writelines(_header_lines(header))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS + tuple(trace.coord_names))
        for t in range(trace.iterations):
            w.writerow(
                [t + 1, int(trace.accepted[t]), format_number(trace.log_est[t]),
                 int(trace.draws[t]), int(trace.cap_hit[t])]
                + [format_number(v) for v in trace.samples[t]]
            )


def read_trace(path) -> ChainTrace:
    """Inverse of :func:`write_trace` (values at 12 significant digits)."""
    p = _require_file(path)
    meta = read_header(p)
    with open(p) as fh:
        body = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(body)
    try:
        cols = next(reader)
    except StopIteration:
        raise DataError(f"{p}: missing column header") from None
    if tuple(cols[:5]) != TRACE_COLUMNS:
        raise DataError(f"{p}: not a trace file (columns {cols[:5]})")
    rows = [r for r in reader if r]
    if not rows:
        raise DataError(f"{p}: trace has no rows")
    try:
        a = np.array(rows, dtype=float)
    except ValueError:
        raise DataError(f"{p}: malformed trace rows") from None

    def meta_int(key, default):
        try:
            return int(meta.get(key, default))
        except ValueError:
            return default

    return ChainTrace(
        accepted=a[:, 1].astype(bool),
        log_est=a[:, 2],
        draws=a[:, 3].astype(np.int64),
        cap_hit=a[:, 4].astype(bool),
        samples=a[:, 5:],
        coord_names=tuple(cols[5:]),
        config=meta,
        burn_in=meta_int("burn_in", 0),
        thin=meta_int("thin", 1),
        numeric_failures=meta_int("result.numeric_failures", 0),
        init_attempts=meta_int("result.init_attempts", 1),
    )


def write_rows(path_or_file, rows: list, meta: Optional[dict] = None) -> None:
    """Write a list of dicts as CSV (floats at 12 significant digits)."""
    if not rows:
        raise ValueError("nothing to write")
    cols = list(rows[0])

    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return int(v)
        if isinstance(v, (float, np.floating)):
            return format_number(v)
        return v

    def emit(fh):
        fh.writelines(_header_lines(meta or {}))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([cell(r[c]) for c in cols])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)
