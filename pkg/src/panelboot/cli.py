"""Command line front end.

Subcommands: ``fit`` and ``bootstrap-ci`` for single datasets (JSON
output), ``oracle`` for exact distribution theory (CSV), ``simulate``
for Monte Carlo coverage tables (CSV/JSON/markdown).  Every run echoes
the resolved seed and a 12-hex config hash to stderr, and artifacts are
byte-identical across repeated runs and thread budgets.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O or
data failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from pathlib import Path

from .bootstrap import (
    ellipsoid_interval,
    normal_ci,
    percentile_ci,
    percentile_t_ci,
    run_bootstrap,
)
from .data import load_csv
from .errors import DataError, DegenerateFitError, NumericalError, UsageError
from .harness import (
    emit_table,
    eta_profile,
    parse_config_file,
    run_experiment,
    table2_configs,
    table3_configs,
)
from .inference import sigma_hat
from .models import get_model
from .newton import estimate
from .oracle import figure1_curves, second_moment_truth, table1_rows

__all__ = ["main", "build_parser"]

_MODEL_CHOICES = ("normal-means", "dynamic-logit")


def _hash_parts(parts) -> str:
    joined = ";".join(str(p) for p in parts)
    return hashlib.sha256(joined.encode()).hexdigest()[:12]


def _echo(seed: int, config_hash: str) -> None:
    print(f"seed={seed} config={config_hash}", file=sys.stderr)


def _dataset_digest(path: str) -> str:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    return hashlib.sha256(payload).hexdigest()[:12]


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    try:
        return open(path, "w", encoding="utf-8"), True
    except OSError as exc:
        raise DataError(f"cannot open output {path}: {exc}") from exc


def _emit(path, writer) -> None:
    fh, close = _open_out(path)
    try:
        writer(fh)
    finally:
        if close:
            fh.close()


def _finite_or_none(value: float):
    return float(value) if math.isfinite(value) else None


def _dump_json(payload: dict, fh) -> None:
    json.dump(payload, fh, indent=2)
    fh.write("\n")


def cmd_fit(args) -> int:
    digest = _dataset_digest(args.dataset)
    _echo(args.seed, _hash_parts(["fit", digest, args.model, args.seed]))
    data = load_csv(args.dataset)
    model = get_model(args.model)
    result = estimate(model, data)
    if not result.converged:
        raise NumericalError(
            f"fit did not converge after {result.iterations} iterations "
            f"(score sup norm {result.score_sup:.3e})"
        )
    sig = sigma_hat(model, data, result)
    payload = result.to_dict()
    # dropped strata keep their slot with null effects instead of NaN
    payload["eta"] = [
        [_finite_or_none(v) for v in row] for row in payload["eta"]
    ]
    payload["sigma"] = [[float(v) for v in row] for row in sig.sigma]
    payload["nm"] = sig.nm
    payload["model"] = args.model
    _emit(args.out, lambda fh: _dump_json(payload, fh))
    return 0


_CI_BUILDERS = {
    "percentile": percentile_ci,
    "percentile-t": percentile_t_ci,
    "ellipsoid": ellipsoid_interval,
    "normal": normal_ci,
}


def cmd_bootstrap_ci(args) -> int:
    digest = _dataset_digest(args.dataset)
    _echo(
        args.seed,
        _hash_parts(
            ["bootstrap-ci", digest, args.model, args.method, args.level, args.boot, args.seed]
        ),
    )
    data = load_csv(args.dataset)
    model = get_model(args.model)
    result = estimate(model, data)
    if not result.converged:
        raise NumericalError("fit did not converge; cannot bootstrap")
    draws = run_bootstrap(model, data, result, B=args.boot, entropy=(args.seed,))
    report = _CI_BUILDERS[args.method](draws, level=args.level)
    payload = {
        "method": report.method,
        "level": report.level,
        "lower": report.lower,
        "upper": report.upper,
        "length": report.length,
        "B": report.B,
        "failures": report.failures,
        "phi_hat": [float(v) for v in draws.phi_hat],
        "seed": args.seed,
    }
    _emit(args.out, lambda fh: _dump_json(payload, fh))
    return 0


def cmd_oracle_table1(args) -> int:
    _echo(args.seed, _hash_parts(["oracle-table1", args.level]))
    rows = table1_rows(level=args.level)

    def write(fh):
        fh.write("n,m,s_hat,s_check,s_tilde,e_star,s_star\n")
        for row in rows:
            fh.write(
                f"{row['n']},{row['m']},{row['s_hat']!r},{row['s_check']!r},"
                f"{row['s_tilde']!r},{row['e_star']!r},{row['s_star']!r}\n"
            )

    _emit(args.out, write)
    return 0


def cmd_oracle_figure1(args) -> int:
    _echo(
        args.seed,
        _hash_parts(["oracle-figure1", args.n, args.m, args.phi0, args.points]),
    )
    curves = figure1_curves(n=args.n, m=args.m, phi0=args.phi0, points=args.points)
    outdir = Path(args.out_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {outdir}: {exc}") from exc
    for name, curve in curves.items():
        target = outdir / f"figure1_{name}.csv"

        def write(fh, curve=curve):
            fh.write("x,pdf,cdf,ref_pdf,ref_cdf\n")
            cols = [curve[key] for key in ("x", "pdf", "cdf", "ref_pdf", "ref_cdf")]
            for vals in zip(*cols):
                fh.write(",".join(repr(float(v)) for v in vals) + "\n")

        _emit(str(target), write)
        print(f"wrote {target}", file=sys.stderr)
    return 0


def cmd_oracle_second_moment(args) -> int:
    _echo(
        args.seed,
        _hash_parts(["oracle-second-moment", args.phi0, args.eta_rule, args.n, args.m]),
    )
    eta0 = eta_profile(args.eta_rule, args.n)
    bias, variance = second_moment_truth(args.phi0, eta0, args.n, args.m)
    delta = float((eta0 ** 2).mean())

    def write(fh):
        fh.write("phi0,eta_rule,n,m,delta,bias,variance\n")
        fh.write(
            f"{args.phi0!r},{args.eta_rule},{args.n},{args.m},"
            f"{delta!r},{bias!r},{variance!r}\n"
        )

    _emit(args.out, write)
    return 0


def _run_table(args, configs) -> int:
    combined = _hash_parts([cfg.canonical() for cfg in configs])
    _echo(args.seed, combined)
    rows = []
    for cfg in configs:
        rows.extend(run_experiment(cfg))
        last = rows[-1]
        print(
            f"done {cfg.model} phi0={cfg.phi0:g} n={cfg.n} m={cfg.m} "
            f"({last.wall_time:.1f}s, {last.failures} failures)",
            file=sys.stderr,
        )
    _emit(args.out, lambda fh: emit_table(rows, args.format, fh))
    return 0


def cmd_simulate_table2(args) -> int:
    configs = table2_configs(
        phi0=args.phi0,
        n=args.n,
        m=args.m,
        reps=args.reps,
        boot=args.boot,
        seed=args.seed,
        threads=args.threads,
        level=args.level,
    )
    return _run_table(args, configs)


def cmd_simulate_table3(args) -> int:
    configs = table3_configs(
        n=args.n,
        m=args.m,
        phi0=args.phi0,
        reps=args.reps,
        boot=args.boot,
        seed=args.seed,
        threads=args.threads,
        level=args.level,
    )
    return _run_table(args, configs)


def cmd_simulate_custom(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {args.config}: {exc}") from exc
    cfg = parse_config_file(text)
    if args.threads is not None:
        cfg = dataclasses.replace(cfg, threads=args.threads)
    args.seed = cfg.seed
    return _run_table(args, [cfg])


def _add_out(parser, default="-") -> None:
    parser.add_argument(
        "--out", default=default, help="output path, - for stdout (default %(default)s)"
    )


def _add_seed(parser) -> None:
    parser.add_argument(
        "--seed", type=int, default=0, help="master seed (default %(default)s, always echoed)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelboot",
        description="Fixed-effect panel MLE with parametric-bootstrap confidence sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model to a dataset, print the result as JSON")
    p_fit.add_argument("dataset", help="panel CSV path")
    p_fit.add_argument("--model", choices=_MODEL_CHOICES, required=True)
    _add_seed(p_fit)
    _add_out(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_ci = sub.add_parser(
        "bootstrap-ci", help="fit, bootstrap, and print one confidence interval as JSON"
    )
    p_ci.add_argument("dataset", help="panel CSV path")
    p_ci.add_argument("--model", choices=_MODEL_CHOICES, required=True)
    p_ci.add_argument(
        "--method",
        choices=tuple(_CI_BUILDERS),
        default="percentile",
        help="interval construction (default %(default)s)",
    )
    p_ci.add_argument("--level", type=float, default=0.95, help="coverage level (default %(default)s)")
    p_ci.add_argument("--boot", type=int, default=199, help="bootstrap replicates (default %(default)s)")
    _add_seed(p_ci)
    _add_out(p_ci)
    p_ci.set_defaults(func=cmd_bootstrap_ci)

    p_oracle = sub.add_parser("oracle", help="exact finite-sample distribution theory")
    oracle_sub = p_oracle.add_subparsers(dest="task", required=True)

    p_t1 = oracle_sub.add_parser("table1", help="exact coverage of every interval construction")
    p_t1.add_argument("--level", type=float, default=0.95, help="coverage level (default %(default)s)")
    _add_seed(p_t1)
    _add_out(p_t1)
    p_t1.set_defaults(func=cmd_oracle_table1)

    p_f1 = oracle_sub.add_parser("figure1", help="exact density and cdf curves, six CSV files")
    p_f1.add_argument("--n", type=int, default=10, help="strata (default %(default)s)")
    p_f1.add_argument("--m", type=int, default=5, help="periods (default %(default)s)")
    p_f1.add_argument("--phi0", type=float, default=1.0, help="true variance (default %(default)s)")
    p_f1.add_argument("--points", type=int, default=4001, help="grid size (default %(default)s)")
    p_f1.add_argument("--out-dir", default=".", help="directory for curve files (default %(default)s)")
    _add_seed(p_f1)
    p_f1.set_defaults(func=cmd_oracle_figure1)

    p_sm = oracle_sub.add_parser("second-moment", help="bias and variance of the plug-in average squared effect")
    p_sm.add_argument("--n", type=int, required=True)
    p_sm.add_argument("--m", type=int, required=True)
    p_sm.add_argument("--phi0", type=float, default=1.0, help="true variance (default %(default)s)")
    p_sm.add_argument(
        "--eta-rule", choices=("zeros", "i/n"), default="i/n", help="effect profile (default %(default)s)"
    )
    _add_seed(p_sm)
    _add_out(p_sm)
    p_sm.set_defaults(func=cmd_oracle_second_moment)

    p_sim = sub.add_parser("simulate", help="Monte Carlo coverage experiments")
    sim_sub = p_sim.add_subparsers(dest="table", required=True)

    def _sim_common(p) -> None:
        p.add_argument("--reps", type=int, default=1000, help="replications (default %(default)s)")
        p.add_argument("--boot", type=int, default=199, help="bootstrap replicates (default %(default)s)")
        p.add_argument("--level", type=float, default=0.95, help="coverage level (default %(default)s)")
        p.add_argument("--threads", type=int, default=1, help="worker processes (default %(default)s)")
        p.add_argument(
            "--format", choices=("csv", "json", "markdown"), default="csv",
            help="table format (default %(default)s)",
        )
        _add_seed(p)
        _add_out(p)

    p_s2 = sim_sub.add_parser("table2", help="dynamic-logit coverage grid")
    p_s2.add_argument("--phi0", type=float, default=None, help="restrict to one state dependence value")
    p_s2.add_argument("--n", type=int, default=None, help="restrict to one panel width")
    p_s2.add_argument("--m", type=int, default=None, help="restrict to one panel length")
    _sim_common(p_s2)
    p_s2.set_defaults(func=cmd_simulate_table2)

    p_s3 = sim_sub.add_parser("table3", help="average-squared-effect coverage grid")
    p_s3.add_argument("--n", type=int, default=None, help="restrict to one panel width")
    p_s3.add_argument("--m", type=int, default=None, help="restrict to one panel length")
    p_s3.add_argument("--phi0", type=float, default=1.0, help="true variance (default %(default)s)")
    _sim_common(p_s3)
    p_s3.set_defaults(func=cmd_simulate_table3)

    p_sc = sim_sub.add_parser("custom", help="run one design from a key=value config file")
    p_sc.add_argument("--config", required=True, help="config file path")
    p_sc.add_argument("--threads", type=int, default=None, help="override the config thread budget")
    p_sc.add_argument(
        "--format", choices=("csv", "json", "markdown"), default="csv",
        help="table format (default %(default)s)",
    )
    _add_out(p_sc)
    p_sc.set_defaults(func=cmd_simulate_custom)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, DegenerateFitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
