"""Seeded Monte Carlo study of interval coverage and length.

Each replication simulates a fresh panel, fits it, runs the parametric
bootstrap, and records every requested interval.  Results are a
deterministic function of (config, seed): replication ``rep`` draws its
data from the stream keyed (seed, rep) and bootstrap replicate ``b``
inside it from (seed, rep, b), so output is identical whatever the
thread budget.  Replications are the unit of parallelism; aggregation
is order-preserving.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO

import numpy as np

from .bootstrap import (
    MIN_REPLICATES,
    delta_bootstrap_ci,
    normal_ci,
    percentile_ci,
    percentile_t_ci,
    run_bootstrap,
)
from .errors import DataError, DegenerateFitError, NumericalError, UsageError
from .models import get_model
from .models.dynamic_logit import dl_simulate
from .models.normal_means import nm_delta_naive_ci, nm_delta_spec, nm_simulate
from .newton import estimate

__all__ = [
    "METHOD_NAMES",
    "ExperimentConfig",
    "ExperimentRow",
    "eta_profile",
    "truth_delta",
    "truth_delta_limit",
    "run_experiment",
    "emit_table",
    "read_table_csv",
    "table2_configs",
    "table3_configs",
    "parse_config_file",
    "config_from_strings",
]

# s_hat: normal interval from the fit's own variance
# e_star: percentile bootstrap
# s_star: bootstrap-t for phi targets, normal-with-bootstrap-sd for
#         average-effect targets (no per-replicate variance to divide by)
METHOD_NAMES = ("s_hat", "e_star", "s_star")

_MODELS = ("normal-means", "dynamic-logit")
_TARGETS = ("phi", "delta")
_ETA_RULES = ("zeros", "i/n")


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation design plus its execution parameters.

    ``threads`` affects scheduling only and is excluded from the
    canonical form, so the config hash names the experiment rather than
    the machine it ran on.
    """

    model: str
    phi0: float
    n: int
    m: int
    eta_rule: str = "zeros"
    init_rule: str = "stationary"
    target: str = "phi"
    methods: tuple = METHOD_NAMES
    level: float = 0.95
    reps: int = 1000
    boot: int = 199
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.model not in _MODELS:
            raise UsageError(f"unknown model {self.model!r}")
        if self.target not in _TARGETS:
            raise UsageError(f"unknown target {self.target!r}")
        if self.target == "delta" and self.model != "normal-means":
            raise UsageError("average-effect targets are defined for normal-means only")
        if self.eta_rule not in _ETA_RULES:
            raise UsageError(f"eta rule must be one of {_ETA_RULES}, got {self.eta_rule!r}")
        if self.init_rule != "stationary":
            raise UsageError(f"unknown init rule {self.init_rule!r}")
        if not self.methods or len(set(self.methods)) != len(self.methods):
            raise UsageError("methods must be non-empty and free of duplicates")
        for name in self.methods:
            if name not in METHOD_NAMES:
                raise UsageError(f"unknown method {name!r}; choose from {METHOD_NAMES}")
        if self.model == "normal-means" and not self.phi0 > 0.0:
            raise UsageError("normal-means requires phi0 > 0")
        if self.n < 1 or self.m < 2:
            raise UsageError("need n >= 1 strata and m >= 2 periods")
        if not 0.0 < self.level < 1.0:
            raise UsageError(f"level must be in (0,1), got {self.level}")
        if self.reps < 1:
            raise UsageError("reps must be >= 1")
        if self.boot < MIN_REPLICATES:
            raise UsageError(f"boot must be >= {MIN_REPLICATES}")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")

    def canonical(self) -> str:
        """Semicolon-joined key=value string; floats via repr, no threads."""
        parts = [
            f"model={self.model}",
            f"target={self.target}",
            f"phi0={float(self.phi0)!r}",
            f"eta_rule={self.eta_rule}",
            f"n={self.n}",
            f"m={self.m}",
            f"init_rule={self.init_rule}",
            "methods=" + ",".join(self.methods),
            f"level={float(self.level)!r}",
            f"reps={self.reps}",
            f"boot={self.boot}",
            f"seed={self.seed}",
        ]
        return ";".join(parts)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("ascii")).hexdigest()[:12]


@dataclass(frozen=True)
class ExperimentRow:
    """Aggregated coverage and length for one design.

    ``coverage`` counts hits against the finite-design truth.  For
    average-effect targets ``coverage_limit`` recounts the same
    intervals against the large-n limit of the estimand; at n=50 the
    two truths differ by about 0.01, which is material at the 95%
    level, so both are always reported.  ``wall_time`` and
    ``replications`` never enter serialized artifacts or equality.
    """

    model: str
    target: str
    phi0: float
    eta_rule: str
    n: int
    m: int
    level: float
    reps: int
    boot: int
    seed: int
    config_hash: str
    truth: float
    truth_limit: Optional[float]
    coverage: dict
    coverage_se: dict
    coverage_limit: Optional[dict]
    mean_length: dict
    failures: int
    wall_time: float = field(default=0.0, compare=False)
    replications: Optional[tuple] = field(default=None, compare=False, repr=False)


def eta_profile(rule: str, n: int) -> np.ndarray:
    """Per-stratum true effects under a named rule."""
    if rule == "zeros":
        return np.zeros(n)
    if rule == "i/n":
        return np.arange(1, n + 1, dtype=float) / n
    raise UsageError(f"eta rule must be one of {_ETA_RULES}, got {rule!r}")


def truth_delta(cfg: ExperimentConfig) -> float:
    """Finite-design value of the average squared effect.

    Under the i/n rule this is sum((i/n)^2)/n = (n+1)(2n+1)/(6 n^2),
    about 0.3434 at n=50; the limit 1/3 lives in truth_delta_limit.
    """
    if cfg.target != "delta":
        raise UsageError("truth_delta applies to average-effect targets only")
    if cfg.eta_rule == "zeros":
        return 0.0
    n = cfg.n
    return (n + 1) * (2 * n + 1) / (6.0 * n * n)


def truth_delta_limit(cfg: ExperimentConfig) -> float:
    """Large-n limit of the average squared effect under the eta rule."""
    if cfg.target != "delta":
        raise UsageError("truth_delta_limit applies to average-effect targets only")
    return 0.0 if cfg.eta_rule == "zeros" else 1.0 / 3.0


def _build_interval(cfg: ExperimentConfig, draws, name: str):
    if cfg.target == "phi":
        if name == "s_hat":
            rep = normal_ci(draws, level=cfg.level)
        elif name == "e_star":
            rep = percentile_ci(draws, level=cfg.level)
        else:
            rep = percentile_t_ci(draws, level=cfg.level)
        return rep.lower, rep.upper
    if name == "s_hat":
        # uses the retained panel size, which equals n for this model
        k = draws.sigma.nm // cfg.m
        return nm_delta_naive_ci(
            draws.delta_center, float(draws.phi_hat[0]), k, cfg.m, cfg.level
        )
    method = "percentile" if name == "e_star" else "normal"
    rep = delta_bootstrap_ci(draws, cfg.level, method=method)
    return rep.lower, rep.upper


def _one_replication(cfg: ExperimentConfig, rep: int) -> dict:
    """Simulate, fit, bootstrap, and build each requested interval.

    Module-level so process pools can pickle it; the model contract is
    rebuilt inside the worker because contracts hold closures.
    """
    model = get_model(cfg.model)
    eta0 = eta_profile(cfg.eta_rule, cfg.n)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, rep)))
    try:
        if cfg.model == "normal-means":
            data = nm_simulate(cfg.phi0, eta0, cfg.n, cfg.m, rng)
        else:
            data = dl_simulate(cfg.phi0, eta0, cfg.n, cfg.m, rng=rng)
        result = estimate(model, data)
        effect = nm_delta_spec() if cfg.target == "delta" else None
        draws = run_bootstrap(
            model, data, result, B=cfg.boot, entropy=(cfg.seed, rep), effect=effect
        )
        intervals = {name: _build_interval(cfg, draws, name) for name in cfg.methods}
    except (NumericalError, DegenerateFitError) as exc:
        return {"rep": rep, "ok": False, "error": str(exc)}
    return {"rep": rep, "ok": True, "intervals": intervals}


def _map_replications(cfg: ExperimentConfig) -> list:
    if cfg.threads == 1:
        return [_one_replication(cfg, rep) for rep in range(cfg.reps)]
    chunk = max(1, cfg.reps // (8 * cfg.threads))
    with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
        return list(
            pool.map(
                _one_replication,
                itertools.repeat(cfg),
                range(cfg.reps),
                chunksize=chunk,
            )
        )


def run_experiment(cfg: ExperimentConfig, keep_replications: bool = False) -> list:
    """Run every replication of one design and aggregate.

    Returns a one-element list so callers can concatenate designs into
    a table.  Individual replication failures are counted, not fatal,
    unless more than 5% fail.  Monte Carlo standard errors divide by
    the number of replications actually aggregated.  With
    ``keep_replications`` the row carries the per-replication records
    so reported coverage can be recounted from stored indicators.
    """
    start = time.perf_counter()
    records = _map_replications(cfg)
    bad = sum(1 for r in records if not r["ok"])
    if bad > 0.05 * cfg.reps:
        raise NumericalError(f"{bad} of {cfg.reps} replications failed; the ceiling is 5%")
    truth = float(cfg.phi0) if cfg.target == "phi" else truth_delta(cfg)
    limit = None if cfg.target == "phi" else truth_delta_limit(cfg)
    kept = [r for r in records if r["ok"]]
    used = len(kept)
    coverage: dict = {}
    coverage_se: dict = {}
    mean_length: dict = {}
    coverage_limit: Optional[dict] = None if limit is None else {}
    for name in cfg.methods:
        lo = np.array([r["intervals"][name][0] for r in kept])
        hi = np.array([r["intervals"][name][1] for r in kept])
        cov = float(np.mean((lo <= truth) & (truth <= hi)))
        coverage[name] = cov
        coverage_se[name] = math.sqrt(cov * (1.0 - cov) / used)
        mean_length[name] = float(np.mean(hi - lo))
        if coverage_limit is not None:
            coverage_limit[name] = float(np.mean((lo <= limit) & (limit <= hi)))
    row = ExperimentRow(
        model=cfg.model,
        target=cfg.target,
        phi0=float(cfg.phi0),
        eta_rule=cfg.eta_rule,
        n=cfg.n,
        m=cfg.m,
        level=float(cfg.level),
        reps=cfg.reps,
        boot=cfg.boot,
        seed=cfg.seed,
        config_hash=cfg.config_hash(),
        truth=truth,
        truth_limit=limit,
        coverage=coverage,
        coverage_se=coverage_se,
        coverage_limit=coverage_limit,
        mean_length=mean_length,
        failures=bad,
        wall_time=time.perf_counter() - start,
        replications=tuple(records) if keep_replications else None,
    )
    return [row]


_CSV_COLUMNS = (
    "model",
    "target",
    "phi0",
    "eta_rule",
    "n",
    "m",
    "level",
    "reps",
    "boot",
    "seed",
    "config_hash",
    "truth",
    "truth_limit",
    "method",
    "coverage",
    "coverage_se",
    "coverage_limit",
    "mean_length",
    "failures",
)


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def emit_table(rows: Sequence[ExperimentRow], fmt: str, fh: TextIO) -> None:
    """Serialize rows as csv, json, or markdown.

    csv is the lossless long form, one line per design x method, and
    round-trips through read_table_csv.  json nests one object per
    design, each carrying its config hash.  markdown prints one wide
    table: design columns, then every coverage column, then every
    length column.  Wall time is absent from all three on purpose; it
    is the one field that varies across otherwise identical runs.
    """
    if fmt == "csv":
        _emit_csv(rows, fh)
    elif fmt == "json":
        _emit_json(rows, fh)
    elif fmt == "markdown":
        _emit_markdown(rows, fh)
    else:
        raise UsageError(f"unknown table format {fmt!r}")


def _emit_csv(rows: Sequence[ExperimentRow], fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for row in rows:
        for name in row.coverage:
            writer.writerow(
                [
                    row.model,
                    row.target,
                    repr(float(row.phi0)),
                    row.eta_rule,
                    row.n,
                    row.m,
                    repr(float(row.level)),
                    row.reps,
                    row.boot,
                    row.seed,
                    row.config_hash,
                    repr(float(row.truth)),
                    _num(row.truth_limit),
                    name,
                    repr(float(row.coverage[name])),
                    repr(float(row.coverage_se[name])),
                    _num(None if row.coverage_limit is None else row.coverage_limit[name]),
                    repr(float(row.mean_length[name])),
                    row.failures,
                ]
            )


def _row_json(row: ExperimentRow) -> dict:
    return {
        "model": row.model,
        "target": row.target,
        "phi0": row.phi0,
        "eta_rule": row.eta_rule,
        "n": row.n,
        "m": row.m,
        "level": row.level,
        "reps": row.reps,
        "boot": row.boot,
        "seed": row.seed,
        "config_hash": row.config_hash,
        "truth": row.truth,
        "truth_limit": row.truth_limit,
        "coverage": dict(row.coverage),
        "coverage_se": dict(row.coverage_se),
        "coverage_limit": None if row.coverage_limit is None else dict(row.coverage_limit),
        "mean_length": dict(row.mean_length),
        "failures": row.failures,
    }


def _emit_json(rows: Sequence[ExperimentRow], fh: TextIO) -> None:
    json.dump({"rows": [_row_json(r) for r in rows]}, fh, indent=2)
    fh.write("\n")


def _emit_markdown(rows: Sequence[ExperimentRow], fh: TextIO) -> None:
    if not rows:
        raise UsageError("no rows to tabulate")
    methods = list(rows[0].coverage)
    for row in rows:
        if list(row.coverage) != methods:
            raise UsageError("markdown layout needs a common method list across rows")
    has_limit = any(r.coverage_limit is not None for r in rows)
    header = ["model", "phi0", "eta_rule", "n", "m"]
    header += [f"cov {m}" for m in methods]
    if has_limit:
        header += [f"cov_limit {m}" for m in methods]
    header += [f"len {m}" for m in methods]
    fh.write("| " + " | ".join(header) + " |\n")
    fh.write("|" + "|".join(" --- " for _ in header) + "|\n")
    for r in rows:
        cells = [r.model, f"{r.phi0:g}", r.eta_rule, str(r.n), str(r.m)]
        cells += [f"{r.coverage[m]:.3f}" for m in methods]
        if has_limit:
            if r.coverage_limit is None:
                cells += ["" for _ in methods]
            else:
                cells += [f"{r.coverage_limit[m]:.3f}" for m in methods]
        cells += [f"{r.mean_length[m]:.3f}" for m in methods]
        fh.write("| " + " | ".join(cells) + " |\n")


def read_table_csv(fh) -> list:
    """Rebuild ExperimentRow objects from the csv long form."""
    reader = csv.DictReader(fh)
    if reader.fieldnames != list(_CSV_COLUMNS):
        raise DataError(f"unexpected table header: {reader.fieldnames}")
    rows = []
    for _, group in itertools.groupby(reader, key=lambda rec: rec["config_hash"]):
        recs = list(group)
        first = recs[0]
        try:
            has_limit = first["truth_limit"] != ""
            rows.append(
                ExperimentRow(
                    model=first["model"],
                    target=first["target"],
                    phi0=float(first["phi0"]),
                    eta_rule=first["eta_rule"],
                    n=int(first["n"]),
                    m=int(first["m"]),
                    level=float(first["level"]),
                    reps=int(first["reps"]),
                    boot=int(first["boot"]),
                    seed=int(first["seed"]),
                    config_hash=first["config_hash"],
                    truth=float(first["truth"]),
                    truth_limit=float(first["truth_limit"]) if has_limit else None,
                    coverage={r["method"]: float(r["coverage"]) for r in recs},
                    coverage_se={r["method"]: float(r["coverage_se"]) for r in recs},
                    coverage_limit=(
                        {r["method"]: float(r["coverage_limit"]) for r in recs}
                        if first["coverage_limit"] != ""
                        else None
                    ),
                    mean_length={r["method"]: float(r["mean_length"]) for r in recs},
                    failures=int(first["failures"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed table row: {exc}") from exc
    return rows


def table2_configs(
    phi0=None,
    n=None,
    m=None,
    reps: int = 1000,
    boot: int = 199,
    seed: int = 0,
    threads: int = 1,
    level: float = 0.95,
) -> list:
    """Dynamic-logit coverage designs; omitted axes run their full grid.

    Full grid: phi0 in {1/2, 1} x n in {100, 250} x m in {10, 20},
    zero effects, stationary initial conditions.
    """
    phis = (0.5, 1.0) if phi0 is None else (float(phi0),)
    ns = (100, 250) if n is None else (int(n),)
    ms = (10, 20) if m is None else (int(m),)
    return [
        ExperimentConfig(
            model="dynamic-logit",
            phi0=p,
            n=nn,
            m=mm,
            eta_rule="zeros",
            target="phi",
            reps=reps,
            boot=boot,
            seed=seed,
            threads=threads,
            level=level,
        )
        for p in phis
        for nn in ns
        for mm in ms
    ]


def table3_configs(
    n=None,
    m=None,
    phi0: float = 1.0,
    reps: int = 1000,
    boot: int = 199,
    seed: int = 0,
    threads: int = 1,
    level: float = 0.95,
) -> list:
    """Average-squared-effect designs; omitted axes run their full grid.

    Full grid: n in {50, 100} x m in {10, 20, 50}, effects i/n, unit
    variance.  Coverage is reported against both the finite-design
    truth and its large-n limit.
    """
    ns = (50, 100) if n is None else (int(n),)
    ms = (10, 20, 50) if m is None else (int(m),)
    return [
        ExperimentConfig(
            model="normal-means",
            phi0=float(phi0),
            n=nn,
            m=mm,
            eta_rule="i/n",
            target="delta",
            reps=reps,
            boot=boot,
            seed=seed,
            threads=threads,
            level=level,
        )
        for nn in ns
        for mm in ms
    ]


_CONFIG_CONVERTERS = {
    "model": str,
    "eta_rule": str,
    "init_rule": str,
    "target": str,
    "phi0": float,
    "level": float,
    "n": int,
    "m": int,
    "reps": int,
    "boot": int,
    "seed": int,
    "threads": int,
    "methods": lambda s: tuple(t.strip() for t in s.split(",") if t.strip()),
}


def config_from_strings(fields: dict) -> ExperimentConfig:
    """Build a config from string values keyed by field name."""
    kwargs = {}
    for key, value in fields.items():
        conv = _CONFIG_CONVERTERS.get(key)
        if conv is None:
            raise UsageError(f"unknown config key {key!r}")
        try:
            kwargs[key] = conv(value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {value!r}") from exc
    for required in ("model", "phi0", "n", "m"):
        if required not in kwargs:
            raise UsageError(f"config requires {required}")
    return ExperimentConfig(**kwargs)


def parse_config_file(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines into a config.

    Blank lines and ``#`` comments are ignored.  Keys mirror
    ExperimentConfig fields; methods is a comma-separated list.
    """
    fields: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in fields:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        fields[key] = value
    return config_from_strings(fields)
