"""Command-line interface: ``analyze``, ``simulate`` and ``robustness``.

Exit codes:
    0  success
    1  configuration error (bad flags or parameters)
    2  data error (unreadable file, unknown column, invalid cell)
    3  degenerate analysis (e.g. every bootstrap replicate unusable)

Reports go to ``--out`` or stdout.  Failures print a single line on
stderr of the form ``error code=<n> kind=<kind> reason=<json string>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import report as rpt
from .dataset import ColumnSpec, dataset_csv, load_csv, read_header
from .errors import AnalysisError, ConfigError, DataError, ReplicateTaskError
from .regress import Design, design_from_dataset
from .simulate import (
    DEFAULT_FRACTIONS,
    CoxSimParams,
    monte_carlo,
    simulate_cox_data,
    subsample_robustness,
)
from .spline import SplineSpec, expand_variable, parse_spline_flag
from .vimp import NoiseMethod, vimp_analysis

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which is our data code
        raise ConfigError(message)


@dataclass
class AnalysisConfig:
    data: str
    family: str
    response: str | None = None
    time: str | None = None
    event: str | None = None
    covariates: list[str] | None = None
    binary: list[str] = field(default_factory=list)
    splines: list[SplineSpec] = field(default_factory=list)
    B: int = 1000
    seed: int = 0
    noise: str = "zero"
    jobs: int = 1
    fmt: str = "table"
    out: str | None = None

    def validate(self) -> None:
        if self.B < 1:
            raise ConfigError(f"--bootstrap must be >= 1, got {self.B}")
        if self.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {self.jobs}")
        if self.family == "cox":
            if not self.time or not self.event:
                raise ConfigError("--family cox needs --time and --event")
            if self.response:
                raise ConfigError("--response is not used with --family cox")
        else:
            if not self.response:
                raise ConfigError(f"--family {self.family} needs --response")
            if self.time or self.event:
                raise ConfigError("--time/--event are only used with --family cox")
        NoiseMethod.parse(self.noise)
        if self.covariates is not None:
            for s in self.splines:
                if s.variable not in self.covariates:
                    raise ConfigError(f"spline variable {s.variable!r} is not a covariate")


def _csv_list(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="input CSV file")
    p.add_argument("--family", required=True, choices=("linear", "logistic", "cox"))
    p.add_argument("--response", help="response column (linear/logistic)")
    p.add_argument("--time", help="follow-up time column (cox)")
    p.add_argument("--event", help="event indicator column (cox)")
    p.add_argument("--covariates", help="comma-separated covariates (default: all other columns)")
    p.add_argument("--binary", default="", help="comma-separated covariates that must be 0/1")
    p.add_argument("--spline", action="append", default=[], metavar="VAR=DF",
                   help="B-spline expansion, var=df or var=degree:k1,k2 (repeatable)")


def _add_run_flags(p: argparse.ArgumentParser, default_b: int = 1000) -> None:
    p.add_argument("--noise", default="zero", choices=("zero", "permute"))
    p.add_argument("--bootstrap", type=int, default=default_b, metavar="B")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oobvimp", description="OOB prediction error, VIMP and marginal VIMP.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="VIMP report for a dataset")
    _add_data_flags(a)
    _add_run_flags(a)
    a.add_argument("--format", default="table", choices=("table", "csv", "json"))
    a.add_argument("--no-marginal", action="store_true", help="skip marginal VIMP refits")
    a.add_argument("--no-stepwise", action="store_true", help="skip stepwise OOB errors")

    s = sub.add_parser("simulate", help="misspecified-Cox Monte Carlo experiment")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--m", type=int, default=1000, help="Monte Carlo repetitions")
    s.add_argument("--variant", default="linear", choices=("linear", "spline", "both"))
    s.add_argument("--df", type=int, default=None, help="spline degrees of freedom (default 5)")
    s.add_argument("--censoring", type=float, default=0.70, help="target censoring fraction")
    s.add_argument("--psa-max", type=float, default=CoxSimParams.psa_range[1])
    s.add_argument("--tumor-max", type=float, default=CoxSimParams.tumor_range[1])
    s.add_argument("--dataset-only", action="store_true",
                   help="write one simulated dataset as CSV instead of running the experiment")
    _add_run_flags(s)
    s.add_argument("--format", default="table", choices=("table", "csv", "json"))

    r = sub.add_parser("robustness", help="subsample robustness of p-values and VIMP")
    _add_data_flags(r)
    _add_run_flags(r)
    r.add_argument("--fractions", default=",".join(str(f) for f in DEFAULT_FRACTIONS))
    r.add_argument("--repeats", type=int, default=500)
    r.add_argument("--format", default="csv", choices=("csv", "json"))
    r.add_argument("--quantiles-out", help="write the quantile summary CSV here")
    return parser


def config_from_args(args: argparse.Namespace) -> AnalysisConfig:
    cfg = AnalysisConfig(
        data=args.data,
        family=args.family,
        response=args.response,
        time=args.time,
        event=args.event,
        covariates=_csv_list(args.covariates),
        binary=_csv_list(args.binary) or [],
        splines=[parse_spline_flag(s) for s in args.spline],
        B=args.bootstrap,
        seed=args.seed,
        noise=args.noise,
        jobs=args.jobs,
        fmt=args.format,
        out=args.out,
    )
    cfg.validate()
    return cfg


def load_design(cfg: AnalysisConfig) -> Design:
    """Read the CSV named by ``cfg`` and build the (spline-expanded) design."""
    header = read_header(cfg.data)
    roles = {}
    for name, role in ((cfg.response, "response"), (cfg.time, "time"), (cfg.event, "event")):
        if name is not None:
            if name not in header:
                raise DataError(f"unknown {role} column {name!r}")
            roles[name] = role
    covariates = cfg.covariates
    if covariates is None:
        covariates = [h for h in header if h not in roles]
    for c in covariates + cfg.binary:
        if c not in header:
            raise DataError(f"unknown covariate column {c!r}")
    for s in cfg.splines:
        if s.variable not in covariates:
            raise ConfigError(f"spline variable {s.variable!r} is not a covariate")
    binary = set(cfg.binary)
    if cfg.family == "logistic":
        binary.add(cfg.response)
    schema = [ColumnSpec(c, "binary" if c in binary else "numeric", "covariate") for c in covariates]
    for name, role in roles.items():
        schema.append(ColumnSpec(name, "binary" if (role == "event" or name in binary) else "numeric", role))
    dataset = load_csv(cfg.data, schema)
    design = design_from_dataset(dataset, cfg.family, covariates,
                                 response=cfg.response, time=cfg.time, event=cfg.event)
    for s in cfg.splines:
        design = expand_variable(design, s)
    return design


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    design = load_design(cfg)
    result = vimp_analysis(design, cfg.B, cfg.seed, cfg.noise,
                           marginal=not args.no_marginal, stepwise=not args.no_stepwise,
                           jobs=cfg.jobs)
    _write(rpt.render_report(result, cfg.fmt), cfg.out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.m < 1:
        raise ConfigError(f"--m must be >= 1, got {args.m}")
    if args.bootstrap < 1:
        raise ConfigError(f"--bootstrap must be >= 1, got {args.bootstrap}")
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
    params = CoxSimParams(n=args.n, target_censoring=args.censoring,
                          psa_range=(0.0, args.psa_max), tumor_range=(0.0, args.tumor_max))
    if args.dataset_only:
        _write(dataset_csv(simulate_cox_data(params, args.seed)), args.out)
        return EXIT_OK
    variants = ("linear", "spline") if args.variant == "both" else (args.variant,)
    summaries = [monte_carlo(params, args.m, args.bootstrap, args.seed, v, df=args.df,
                             method=args.noise, jobs=args.jobs) for v in variants]
    _write(rpt.render_summaries(summaries, args.format, asdict(params), args.seed), args.out)
    return EXIT_OK


def cmd_robustness(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    fractions = _float_list(args.fractions)
    if not fractions:
        raise ConfigError("--fractions is empty")
    if args.repeats < 1:
        raise ConfigError(f"--repeats must be >= 1, got {args.repeats}")
    design = load_design(cfg)
    result = subsample_robustness(design, fractions, args.repeats, cfg.B, cfg.seed,
                                  cfg.noise, jobs=cfg.jobs)
    if args.format == "json":
        _write(rpt.robustness_json(result), cfg.out)
    else:
        _write(rpt.robustness_long_csv(result), cfg.out)
    if args.quantiles_out:
        Path(args.quantiles_out).write_text(rpt.robustness_quantile_csv(result), encoding="utf-8")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "robustness": cmd_robustness}


def _fail(code: int, kind: str, exc: BaseException) -> int:
    sys.stderr.write(f"error code={code} kind={kind} reason={json.dumps(str(exc))}\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except DataError as exc:
        return _fail(EXIT_DATA, "data", exc)
    except (AnalysisError, ReplicateTaskError) as exc:
        return _fail(EXIT_DEGENERATE, "degenerate", exc)


if __name__ == "__main__":
    sys.exit(main())
