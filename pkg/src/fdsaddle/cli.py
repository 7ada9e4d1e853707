"""Command line interface, configuration, and data ingestion.

Commands: ``estimate``, ``test``, ``density``, ``simulate``, ``study-sw``,
``study-null``, ``pdo``.  Options can come from the command line or a flat
``key = value`` config file (command line wins).  Every JSON/CSV artifact
embeds the config hash, the seed, and the library version, and is written
atomically (temp file then rename).

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
non-convergence, 5 unreliable importance sampling.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .exceptions import (
    AllWeightsZero,
    BoundaryHit,
    ConfigError,
    Degenerate,
    DegenerateProposal,
    DomainViolation,
    EmptySeries,
    FdsaddleError,
    FormatError,
    InfeasibleTilt,
    InvalidParameter,
    MissingYears,
    NonConvergence,
    ParseError,
    SingularCovariance,
    SingularInformation,
    SingularJacobian,
    SingularTilt,
    TooShort,
)
from .periodogram import Taper, compute_periodogram
from .saddlepoint import emp_density_grid_1d, exp_sadd_test_simple
from .simulation import (
    INNOVATION_LAWS,
    mc_null_distribution,
    shapiro_wilk_study,
    simulate_arfima,
)
from .spectral import ArfimaModel, model_from_config
from .testing import (
    HypothesisSpec,
    IsConfig,
    p_value_fdes,
    p_value_fdes_composite,
)
from .whittle import solve_whittle, wald_statistic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_UNRELIABLE = 5

_DATA_ERRORS = (ParseError, EmptySeries, FormatError, MissingYears, TooShort,
                FileNotFoundError, IsADirectoryError, PermissionError)
_NUMERIC_ERRORS = (NonConvergence, BoundaryHit, SingularJacobian,
                   SingularCovariance, SingularInformation, Degenerate,
                   SingularTilt, InfeasibleTilt, DomainViolation,
                   DegenerateProposal, AllWeightsZero, InvalidParameter)


@dataclass
class TimeSeriesData:
    """A univariate series plus provenance metadata."""

    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.values)


# ---------------------------------------------------------------------------
# ingestion

def ingest_csv(path, column: int = 0, header: bool = False) -> TimeSeriesData:
    """Read one numeric column from a CSV file.

    Rows are 1-based in error messages (header excluded); any missing or
    non-numeric cell raises ParseError with the offending row and column.
    """
    values = []
    with open(path, newline="") as fh:
        reader = (row for row in csv.reader(fh)
                  if row and not row[0].lstrip().startswith("#"))
        if header:
            next(reader, None)
        for row_idx, row in enumerate(reader, start=1):
            if all(not cell.strip() for cell in row):
                continue
            if column >= len(row):
                raise ParseError(f"row {row_idx}: missing column {column}",
                                 row=row_idx, column=column)
            cell = row[column].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"row {row_idx}: not a number: {cell!r}",
                                 row=row_idx, column=column)
            if not np.isfinite(v):
                raise ParseError(f"row {row_idx}: non-finite value: {cell!r}",
                                 row=row_idx, column=column)
            values.append(v)
    if not values:
        raise EmptySeries(f"no data rows in {path}")
    return TimeSeriesData(np.asarray(values, dtype=float),
                          {"source": str(path), "column": column})


def write_series_csv(path, values, header: str | None = None) -> None:
    """Write one value per line with full precision (round-trips bit-exactly)."""
    buf = io.StringIO()
    if header:
        buf.write(header + "\n")
    for v in np.asarray(values, dtype=float):
        buf.write(repr(float(v)) + "\n")
    _atomic_write(path, buf.getvalue())


@dataclass(frozen=True)
class PdoPipelineSpec:
    """Monthly flat-file source and processing choices for the PDO series."""

    path: str
    year_start: int = 1920
    year_end: int = 2022


def _parse_pdo_rows(path):
    """Yield (year, monthly values) from a NOAA-style fixed-width file.

    Rows are ``year v1 .. v12``; non-numeric leading lines (titles, column
    headers) are skipped; the sentinel -99.99 marks a missing month.
    """
    rows = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            try:
                year = int(parts[0])
            except ValueError:
                continue
            if year < 1000 or year > 3000:
                continue
            try:
                vals = [float(p) for p in parts[1:13]]
            except ValueError:
                raise FormatError(f"non-numeric monthly value in year {year}")
            if len(vals) != 12:
                raise FormatError(f"year {year} has {len(vals)} monthly values, expected 12")
            rows[year] = np.asarray(vals)
    if not rows:
        raise FormatError(f"no data rows recognized in {path}")
    return rows


def pdo_pipeline(spec: PdoPipelineSpec) -> TimeSeriesData:
    """Annual-mean PDO series over the requested years, linearly detrended.

    Aggregation is the calendar-year mean of the 12 monthly values; the
    trend is removed by ordinary least squares on (year, annual mean) and
    the residuals are returned, with the fitted slope and intercept in the
    metadata.
    """
    rows = _parse_pdo_rows(spec.path)
    years = np.arange(spec.year_start, spec.year_end + 1)
    missing = [int(y) for y in years if y not in rows]
    if missing:
        raise MissingYears(f"years absent from {spec.path}: {missing}",
                           years=missing)
    annual = np.empty(len(years))
    for i, y in enumerate(years):
        vals = rows[y]
        if np.any(vals <= -99.0):
            raise FormatError(f"missing monthly value (sentinel) in year {y}")
        annual[i] = vals.mean()
    slope, intercept = np.polyfit(years.astype(float), annual, 1)
    detrended = annual - (slope * years + intercept)
    return TimeSeriesData(detrended, {
        "source": str(spec.path),
        "year_start": int(spec.year_start),
        "year_end": int(spec.year_end),
        "slope": float(slope),
        "intercept": float(intercept),
        "aggregation": "annual_mean",
    })


# ---------------------------------------------------------------------------
# configuration plumbing

def read_config_file(path) -> dict:
    """Flat ``key = value`` file; '#' starts a comment; values stay strings."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _config_hash(cfg: dict) -> str:
    payload = json.dumps({k: str(v) for k, v in sorted(cfg.items())})
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _atomic_write(path, text: str) -> None:
    path = str(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit_json(path, payload: dict, cfg: dict, seed) -> None:
    payload = {
        "version": __version__,
        "config_hash": _config_hash(cfg),
        "seed": None if seed is None else int(seed),
        **payload,
    }
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path:
        _atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _emit_csv(path, header: str, lines, cfg: dict, seed) -> None:
    buf = io.StringIO()
    buf.write(f"# version={__version__} config_hash={_config_hash(cfg)} "
              f"seed={seed}\n")
    buf.write(header + "\n")
    for line in lines:
        buf.write(line + "\n")
    if path:
        _atomic_write(path, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def parse_model_spec(spec: str):
    """Build a spectral model from a compact string.

    Examples: ``arfima`` (0, d, 0), ``arfima:p=1,q=1``, ``fexp:n_short=2``.
    """
    if not spec:
        raise ConfigError("empty model spec")
    head, _, rest = spec.partition(":")
    cfg = {"family": head.strip().lower()}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        if "=" not in item:
            raise ConfigError(f"model option {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        key = {"p": "p_order", "q": "q_order"}.get(key, key)
        cfg[key] = value
    try:
        for key in ("p_order", "q_order", "n_short"):
            if key in cfg:
                cfg[key] = int(cfg[key])
        if "fix_sigma2" in cfg:
            cfg["fix_sigma2"] = str(cfg["fix_sigma2"]).lower() in ("1", "true", "yes")
        if "sigma2" in cfg:
            cfg["sigma2"] = float(cfg["sigma2"])
        return model_from_config(cfg)
    except (KeyError, ValueError, TypeError, InvalidParameter) as exc:
        raise ConfigError(f"bad model spec {spec!r}: {exc}")


def _parse_floats(text: str) -> np.ndarray:
    try:
        return np.asarray([float(s) for s in text.split(",") if s.strip() != ""])
    except ValueError:
        raise ConfigError(f"expected comma separated numbers, got {text!r}")


def _load_series(opts) -> TimeSeriesData:
    if not opts.get("data"):
        raise ConfigError("this command needs --data")
    data = ingest_csv(opts["data"], column=int(opts.get("column", 0)),
                      header=_truthy(opts.get("header", False)))
    if _truthy(opts.get("demean", False)):
        data.values = data.values - data.values.mean()
        data.metadata["demeaned"] = True
    return data


def _truthy(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).lower() in ("1", "true", "yes", "on")


def _taper_from_name(name):
    if not name or name == "none":
        return None
    if name == "cosine":
        return Taper.cosine()
    raise ConfigError(f"unknown taper {name!r}")


def _slots_to_indices(model, text: str):
    indices = []
    for token in (s.strip() for s in text.split(",")):
        if not token:
            continue
        if token in model.slot_names:
            indices.append(model.slot_names.index(token))
        else:
            try:
                indices.append(int(token))
            except ValueError:
                raise ConfigError(f"unknown slot {token!r}; "
                                  f"model slots are {model.slot_names}")
    if not indices:
        raise ConfigError("no tested slots given")
    return tuple(indices)


# ---------------------------------------------------------------------------
# command implementations

def _fit_from_opts(opts):
    data = _load_series(opts)
    model = parse_model_spec(opts.get("model", "arfima"))
    taper = _taper_from_name(opts.get("taper", "none"))
    pg = compute_periodogram(data.values, taper=taper)
    theta_init = None
    if opts.get("theta_init"):
        theta_init = _parse_floats(opts["theta_init"])
    fit = solve_whittle(pg, model, theta_init=theta_init,
                        variant=opts.get("variant", "plain"))
    return data, model, pg, fit


def cmd_estimate(opts, cfg) -> int:
    _, model, _, fit = _fit_from_opts(opts)
    _emit_json(opts.get("out"), {"command": "estimate",
                                 "model": model.config(),
                                 "fit": fit.to_dict()},
               cfg, opts.get("seed"))
    return EXIT_OK


def cmd_test(opts, cfg) -> int:
    if not opts.get("null"):
        raise ConfigError("test needs --null with the hypothesized values")
    _, model, pg, fit = _fit_from_opts(opts)
    statistic = opts.get("statistic", "wald")
    seed = int(opts.get("seed", 0))
    is_cfg = IsConfig(R=int(opts.get("R", 10_000)), seed=seed,
                      inflate=float(opts.get("inflate", 1.0)))
    scale = opts.get("scale")
    if opts.get("tested_slots"):
        slots = _slots_to_indices(model, opts["tested_slots"])
        theta1_0 = _parse_floats(opts["null"])
        hyp = HypothesisSpec.composite(slots, theta1_0, statistic=statistic,
                                       scale=scale)
        report = p_value_fdes_composite(pg, model, fit, hyp, is_cfg)
    else:
        theta0 = _parse_floats(opts["null"])
        if len(theta0) != model.n_params:
            raise ConfigError(f"--null needs {model.n_params} values "
                              f"for slots {model.slot_names}")
        hyp = HypothesisSpec.simple(theta0, statistic=statistic, scale=scale)
        report = p_value_fdes(pg, model, fit, hyp, is_cfg)
    extras = {}
    if statistic == "wald" and hyp.kind == "simple":
        extras["esadd"] = exp_sadd_test_simple(fit, hyp.theta0, model)
    _emit_json(opts.get("out"), {"command": "test",
                                 "model": model.config(),
                                 "fit": fit.to_dict(),
                                 "report": report.to_dict(), **extras},
               cfg, seed)
    return EXIT_UNRELIABLE if report.unreliable else EXIT_OK


def cmd_density(opts, cfg) -> int:
    _, model, pg, fit = _fit_from_opts(opts)
    if model.n_params != 1:
        raise ConfigError("density grids need a one-parameter model")
    grid = emp_density_grid_1d(pg, model, fit,
                               half_width=float(opts.get("half_width", 0.25)),
                               A=int(opts.get("grid_A", 100)))
    buf = io.StringIO()
    grid.to_csv(buf)
    body = buf.getvalue()
    header, _, rest = body.partition("\n")
    _emit_csv(opts.get("out"), header, rest.splitlines(), cfg,
              opts.get("seed"))
    return EXIT_OK


def cmd_simulate(opts, cfg) -> int:
    seed = int(opts.get("seed", 0))
    series = simulate_arfima(
        n=int(opts.get("n", 250)),
        d=float(opts.get("d", 0.0)),
        ar=_parse_floats(opts["ar"]) if opts.get("ar") else (),
        ma=_parse_floats(opts["ma"]) if opts.get("ma") else (),
        sigma2=float(opts.get("sigma2", 1.0)),
        law=opts.get("law", "gaussian"),
        n_series=int(opts.get("n_series", 1)),
        seed=seed,
    )
    lines = (",".join(repr(float(v)) for v in row) for row in series.T)
    header = ",".join(f"series{i}" for i in range(series.shape[0]))
    _emit_csv(opts.get("out"), header, lines, cfg, seed)
    return EXIT_OK


def cmd_study_sw(opts, cfg) -> int:
    laws = [s.strip() for s in opts.get("laws", ",".join(INNOVATION_LAWS)).split(",")]
    d_values = _parse_floats(opts.get("d_list", "0,0.1,0.2,0.25,0.45"))
    n_values = [int(v) for v in _parse_floats(opts.get("n_list", "30,90,120"))]
    n_reps = int(opts.get("reps", 5000))
    seed = int(opts.get("seed", 0))
    model = ArfimaModel(0, 0)
    lines = []
    for law in laws:
        for d in d_values:
            for n in n_values:
                res = shapiro_wilk_study(n=n, d=float(d), model=model,
                                         theta=[float(d)], law=law,
                                         n_reps=n_reps, seed=seed)
                lines.append(f"{law},{d:g},{n},{res.rejection_rate:.6f}")
    _emit_csv(opts.get("out"), "law,d,n,rejection_rate", lines, cfg, seed)
    return EXIT_OK


def cmd_study_null(opts, cfg) -> int:
    model = parse_model_spec(opts.get("model", "arfima"))
    theta0 = _parse_floats(opts.get("null", "0"))
    statistics = tuple(s.strip() for s in
                       opts.get("statistics", "wald,fdet,owen").split(","))
    seed = int(opts.get("seed", 0))
    res = mc_null_distribution(
        n=int(opts.get("n", 250)), model=model, theta0=theta0,
        statistics=statistics, n_reps=int(opts.get("reps", 1000)),
        law=opts.get("law", "gaussian"),
        variant=opts.get("variant", "plain"), seed=seed)
    lines = (",".join("" if not np.isfinite(v) else repr(float(v)) for v in row)
             for row in res.values)
    if opts.get("out"):
        _emit_csv(opts["out"], ",".join(statistics), lines, cfg, seed)
    _emit_json(opts.get("summary_out"), {"command": "study-null",
                                         "summary": res.to_dict()}, cfg, seed)
    return EXIT_OK


def cmd_pdo(opts, cfg) -> int:
    if not opts.get("data"):
        raise ConfigError("pdo needs --data pointing at the monthly flat file")
    spec = PdoPipelineSpec(path=opts["data"],
                           year_start=int(opts.get("year_start", 1920)),
                           year_end=int(opts.get("year_end", 2022)))
    data = pdo_pipeline(spec)
    if opts.get("out"):
        years = np.arange(spec.year_start, spec.year_end + 1)
        lines = (f"{y},{repr(float(v))}" for y, v in zip(years, data.values))
        _emit_csv(opts["out"], "year,value", lines, cfg, opts.get("seed"))
    payload = {"command": "pdo", "n": data.n, "metadata": data.metadata}
    if _truthy(opts.get("fit", True)):
        model = parse_model_spec(opts.get("model", "arfima:p=1"))
        pg = compute_periodogram(data.values)
        fit = solve_whittle(pg, model, variant=opts.get("variant", "profiled"))
        payload["fit"] = fit.to_dict()
        if opts.get("null"):
            theta0 = _parse_floats(opts["null"])
            payload["wald"] = wald_statistic(fit, theta0)
    _emit_json(opts.get("summary_out"), payload, cfg, opts.get("seed"))
    return EXIT_OK


_COMMANDS = {
    "estimate": cmd_estimate,
    "test": cmd_test,
    "density": cmd_density,
    "simulate": cmd_simulate,
    "study-sw": cmd_study_sw,
    "study-null": cmd_study_null,
    "pdo": cmd_pdo,
}

_OPTION_FLAGS = (
    "data", "column", "header", "demean", "model", "variant", "taper",
    "theta_init", "null", "tested_slots", "statistic", "statistics", "R",
    "seed", "inflate", "scale", "out", "summary_out", "grid_A", "half_width",
    "n", "d", "ar", "ma", "sigma2", "law", "n_series", "laws", "d_list",
    "n_list", "reps", "year_start", "year_end", "fit",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdsaddle",
        description="Frequency domain saddlepoint inference for time series.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="flat key = value config file")
    for flag in _OPTION_FLAGS:
        parser.add_argument("--" + flag.replace("_", "-"), dest=flag,
                            default=None)
    return parser


def run(command: str, opts: dict) -> int:
    """Execute one command; returns the process exit code."""
    # output destinations do not affect the result, so they stay out of the
    # reproducibility hash
    cfg = {"command": command,
           **{k: v for k, v in opts.items()
              if v is not None and k not in ("out", "summary_out")}}
    opts = {k: v for k, v in opts.items() if v is not None}
    try:
        return _COMMANDS[command](opts, cfg)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"error [data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _NUMERIC_ERRORS as exc:
        print(f"error [numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FdsaddleError as exc:
        print(f"error [numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    opts = {}
    if args.config:
        try:
            opts.update(read_config_file(args.config))
        except ConfigError as exc:
            print(f"error [config]: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except OSError as exc:
            print(f"error [data]: {exc}", file=sys.stderr)
            return EXIT_DATA
    for flag in _OPTION_FLAGS:
        value = getattr(args, flag)
        if value is not None:
            opts[flag] = value
    return run(args.command, opts)


if __name__ == "__main__":
    sys.exit(main())
