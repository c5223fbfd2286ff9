"""Command-line front end: ``ccsd cluster ...`` and ``ccsd fraud ...``.

Settings come from an optional JSON ``--config`` file; command-line flags
override file values. Reports are JSON with sorted keys, so an identical
configuration reproduces identical report bytes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from . import __version__
from .cluster import DTW_WINDOWS, SIGMA_MULTIPLIERS, TAU_GRID, ClusterConfig, run_protocol
from .errors import (
    DegenerateKernelError,
    DegenerateScaleError,
    InputError,
    InsufficientReferenceError,
    NoFeasibleBandwidthError,
    NumericalError,
    ParameterError,
    ParseError,
    SchemaError,
    SplitSizeError,
)
from .estimator import CcsdConfig
from .fraud import ABLATIONS, FraudParams, preprocess, run_pipeline
from .io import load_banksim, load_ucr, write_json, write_scores_csv

log = logging.getLogger("ccsd")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    out: str
    train: Optional[str] = None
    test: Optional[str] = None
    method: str = "ccsd"
    cap: Optional[int] = None
    data: Optional[str] = None
    variant: str = "full"
    seed: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    tau_grid: list = field(default_factory=lambda: list(TAU_GRID))
    sigma_multipliers: list = field(default_factory=lambda: list(SIGMA_MULTIPLIERS))
    dtw_windows: list = field(default_factory=lambda: list(DTW_WINDOWS))
    epsilon: float = CcsdConfig.epsilon
    loo: bool = False
    keep_fraction: float = 1.0
    params: dict = field(default_factory=dict)
    write_scores: bool = False
    jobs: int = 1

    def validate(self):
        if self.command not in ("cluster", "fraud"):
            raise ConfigError(f"unknown command {self.command!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        needed = ("train", "test") if self.command == "cluster" else ("data",)
        for name in needed:
            path = getattr(self, name)
            if not path:
                raise ConfigError(f"--{name} is required for {self.command}")
            if not Path(path).is_file():
                raise ConfigError(f"{name} file not found: {path}")
        if self.command == "cluster" and self.method not in ("ccsd", "dtw"):
            raise ConfigError(f"method must be ccsd or dtw, got {self.method!r}")
        if self.command == "fraud" and self.variant not in (*ABLATIONS, "all"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        unknown = set(self.params) - {f.name for f in fields(FraudParams)}
        if unknown:
            raise ConfigError(f"unknown fraud parameter(s): {sorted(unknown)}")


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _window_list(text: str) -> list:
    return [None if v.strip().lower() == "none" else int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccsd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with run settings; flags override it")
        p.add_argument("--out", help="output directory")

    c = sub.add_parser("cluster", help="train-selected k-medoids clustering on UCR-style files")
    common(c)
    c.add_argument("--train")
    c.add_argument("--test")
    c.add_argument("--method", choices=("ccsd", "dtw"))
    c.add_argument("--cap", type=int, help="stratified cap per split")
    c.add_argument("--seeds", type=_int_list, help="comma-separated k-medoids seeds")
    c.add_argument("--tau-grid", dest="tau_grid", type=_float_list)
    c.add_argument("--sigma-grid", dest="sigma_multipliers", type=_float_list)
    c.add_argument("--windows", dest="dtw_windows", type=_window_list, help="DTW windows, e.g. none,5,10")
    c.add_argument("--jobs", type=int, help="worker threads for pairwise matrices")

    f = sub.add_parser("fraud", help="account-level fraud scoring on a BankSim-style CSV")
    common(f)
    f.add_argument("--data")
    f.add_argument("--variant", choices=(*ABLATIONS, "all"))
    f.add_argument("--seed", type=int, help="account split seed")
    f.add_argument("--scores", dest="write_scores", action="store_const", const=True,
                   help="also write per-account score CSVs")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    for name in known:
        flag = getattr(args, name, None)
        if flag is not None and name != "command":
            values[name] = flag
    values["command"] = args.command
    if not values.get("out"):
        raise ConfigError("--out is required")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def run_cluster(cfg: RunConfig) -> dict:
    train, test = load_ucr(cfg.train, cfg.test, allow_ragged=cfg.method == "dtw")
    ccfg = ClusterConfig(
        tau_grid=tuple(cfg.tau_grid),
        sigma_multipliers=tuple(cfg.sigma_multipliers),
        dtw_windows=tuple(cfg.dtw_windows),
        seeds=tuple(cfg.seeds),
        cap=cfg.cap,
        ccsd=CcsdConfig(epsilon=cfg.epsilon, loo=cfg.loo, keep_fraction=cfg.keep_fraction),
        n_jobs=cfg.jobs,
    )
    report = run_protocol(train, test, cfg.method, ccfg)
    report["config"] = asdict(cfg)
    write_json(Path(cfg.out) / "cluster_report.json", report)
    return report


def run_fraud(cfg: RunConfig) -> dict:
    accounts = preprocess(load_banksim(cfg.data), min_length=cfg.params.get("min_length", 80))
    params = FraudParams(**cfg.params)
    variants = list(ABLATIONS) if cfg.variant == "all" else [cfg.variant]
    result = run_pipeline(accounts, params, seed=cfg.seed, variants=variants)
    report = result.to_dict()
    report["n_accounts"] = len(accounts)
    report["config"] = asdict(cfg)
    report["params"] = asdict(params)
    report["variants"] = variants
    write_json(Path(cfg.out) / "fraud_report.json", report)
    if cfg.write_scores:
        labels = {a.customer: a.label for a in accounts}
        for variant in result.scores:
            rows = [
                (c, r.score, labels[c])
                for split in ("val", "test")
                for c, r in sorted(result.scores[variant][split].items())
                if r.score is not None
            ]
            write_scores_csv(Path(cfg.out) / f"scores_{variant}.csv", rows)
    return report


def run(cfg: RunConfig) -> dict:
    return run_cluster(cfg) if cfg.command == "cluster" else run_fraud(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    stage = "config"
    try:
        cfg = resolve_config(args)
        stage = cfg.command
        run(cfg)
    except (ConfigError, SchemaError, ParameterError) as exc:
        print(f"ccsd [{stage}] configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, InputError, SplitSizeError, InsufficientReferenceError, OSError) as exc:
        print(f"ccsd [{stage}] data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NoFeasibleBandwidthError, DegenerateScaleError, DegenerateKernelError, NumericalError) as exc:
        print(f"ccsd [{stage}] numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
