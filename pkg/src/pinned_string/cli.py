"""Command-line front end: ``pinned-string run --experiment ...``.

Exit codes: 0 when every check passed, 2 when a check failed, 1 for usage or
configuration errors. Outputs go to ``--out``: ``report.json``,
``curves.csv`` (columns ``epsilon,estimate,std_error``) and, with
``--dump-paths``, ``paths/*.csv``.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .analytic import DomainError, ModelParams
from .field import ENGINES, PathSample, build_spectral_grid, sample_paths, write_path_csv

log = logging.getLogger("pinned_string")

EXPERIMENTS = ("oracle-check", "axioms", "levy", "hit", "double", "representation")
DEFAULT_ENGINE = {
    "oracle-check": None,
    "axioms": "spectral_pinned",
    "representation": "spectral_pinned",
    "levy": "davies_harte",
    "hit": "davies_harte",
    "double": "davies_harte",
}
DEFAULT_EPSILONS = {
    "levy": [2.0**-k for k in range(2, 8)],
    "hit": [2.0**-k for k in range(2, 10)],
    "double": [2.0**-k for k in range(1, 5)],
}
DEFAULTS = {
    "experiment": None,
    "alpha": 1.0,
    "spatial_dim": 2,
    "value_dim": 1,
    "white_noise": False,
    "engine": None,
    "replicas": 2000,
    "seed": 0,
    "epsilons": None,
    "out": "out",
    "modes": 4096,
    "lambda_min": 1e-6,
    "lambda_max": 1e6,
    "dump_paths": 0,
    "target": None,
    "allow_subcritical": False,
    "workers": None,
}


class ConfigError(ValueError):
    pass


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _bool(text):
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


CONVERT = {
    "alpha": float, "spatial_dim": int, "value_dim": int, "white_noise": _bool, "replicas": int,
    "seed": int, "epsilons": _float_list, "modes": int, "lambda_min": float, "lambda_max": float,
    "dump_paths": int, "target": _float_list, "allow_subcritical": _bool, "workers": int,
    "experiment": str, "engine": str, "out": str,
}


def read_config_file(path) -> dict:
    """Plain ``key = value`` lines; ``#`` starts a comment; dashes and underscores are interchangeable."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.replace("-", "_")
        if k not in CONVERT:
            raise ConfigError(f"{path}:{lineno}: unknown key {k!r}")
        out[k] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pinned-string", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment and write its report")
    r.add_argument("--config", help="key=value file; command-line flags take precedence")
    r.add_argument("--experiment", choices=EXPERIMENTS)
    r.add_argument("--alpha", type=float)
    r.add_argument("--spatial-dim", type=int)
    r.add_argument("--value-dim", type=int)
    r.add_argument("--white-noise", action="store_const", const=True)
    r.add_argument("--engine", choices=ENGINES)
    r.add_argument("--replicas", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--epsilons", type=_float_list, help="comma-separated radius ladder")
    r.add_argument("--out", help="output directory")
    r.add_argument("--modes", type=int, help="spectral modes")
    r.add_argument("--lambda-min", type=float)
    r.add_argument("--lambda-max", type=float)
    r.add_argument("--dump-paths", type=int, nargs="?", const=4, help="write the first N paths as CSV")
    r.add_argument("--target", type=_float_list, help="hitting target point, comma-separated")
    r.add_argument("--allow-subcritical", action="store_const", const=True,
                   help="double points: skip the critical-dimension precondition (control runs)")
    r.add_argument("--workers", type=int, help="worker threads (never changes results)")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> dict:
    """Merge defaults, config file and flags, then validate everything."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            try:
                cfg[k] = CONVERT[k](v)
            except ValueError as err:
                raise ConfigError(f"bad value for {k}: {v!r} ({err})") from None
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    exp = cfg["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"--experiment must be one of {', '.join(EXPERIMENTS)}")
    params = ModelParams(cfg["alpha"], cfg["spatial_dim"], cfg["value_dim"], cfg["white_noise"])
    if cfg["engine"] is None:
        cfg["engine"] = DEFAULT_ENGINE[exp]
    elif cfg["engine"] not in ENGINES:
        raise ConfigError(f"--engine must be one of {', '.join(ENGINES)}")
    if cfg["engine"] == "spectral_pinned" and params.alpha == 0 and not params.white_noise:
        raise DomainError("the spectral engine needs alpha > 0 (alpha = 0 is the Brownian case; use an exact engine)")
    if cfg["replicas"] < 2:
        raise ConfigError("--replicas must be at least 2")
    if cfg["epsilons"] is None:
        cfg["epsilons"] = DEFAULT_EPSILONS.get(exp)
    if cfg["epsilons"] is not None:
        eps = sorted(float(e) for e in cfg["epsilons"])
        if not eps or eps[0] <= 0 or len(set(eps)) != len(eps):
            raise ConfigError("--epsilons must be distinct positive numbers")
        cfg["epsilons"] = eps[::-1]
    if not (0 < cfg["lambda_min"] < cfg["lambda_max"]) or cfg["modes"] < 2:
        raise ConfigError("need modes >= 2 and 0 < lambda_min < lambda_max")
    if exp == "hit":
        if cfg["target"] is None:
            cfg["target"] = [0.5] + [0.0] * (params.value_dim - 1)
        if len(cfg["target"]) != params.value_dim:
            raise ConfigError("--target must have value_dim components")
    if exp == "levy":
        ex._critical_dim_check(params, 1.0, "levy")
    if exp == "double" and not cfg["allow_subcritical"]:
        ex._critical_dim_check(params, 2.0, "double")
    if cfg["dump_paths"] < 0:
        raise ConfigError("--dump-paths must be nonnegative")
    cfg["params"] = params
    return cfg


def echo(cfg: dict) -> dict:
    """Config as stored in the report: everything that can change a number."""
    out = {k: v for k, v in cfg.items() if k not in ("params", "out", "workers")}
    out.update(cfg["params"].to_dict())
    return out


def execute(cfg: dict) -> ex.ExperimentReport:
    exp, params = cfg["experiment"], cfg["params"]
    kw = dict(replicas=cfg["replicas"], seed=cfg["seed"], workers=cfg["workers"])
    grid = None
    if cfg["engine"] == "spectral_pinned":
        grid = build_spectral_grid(params, cfg["modes"], cfg["lambda_min"], cfg["lambda_max"])
    if exp == "oracle-check":
        return ex.oracle_check(params)
    if exp == "axioms":
        return ex.axiom_suite(params, cfg["engine"], grid=grid, **kw)
    if exp == "representation":
        if grid is None:
            grid = build_spectral_grid(params, cfg["modes"], cfg["lambda_min"], cfg["lambda_max"])
        rep = ex.representation_check(params, grid=grid, **kw)
        cond = ex.conditional_independence_check(params, grid=grid, **kw)
        for name, c in cond.checks.items():
            rep.checks[f"conditional_{name}"] = c
        rep.estimates["conditional"] = cond.to_dict()["estimates"]
        rep.notes.extend(cond.notes)
        return rep
    if exp == "levy":
        eps = cfg["epsilons"]
        check = 1.0 / 16 if any(abs(e - 1.0 / 16) < 1e-15 for e in eps) else eps[len(eps) // 2]
        return ex.levy_identity_check(params, cfg["engine"], epsilons=eps, check_epsilon=check, grid=grid, **kw)
    if exp == "hit":
        return ex.hitting_report(params, cfg["target"], cfg["epsilons"], engine=cfg["engine"], grid=grid, **kw)
    if exp == "double":
        _, rep = ex.double_point_experiment(params, epsilons=cfg["epsilons"], engine=cfg["engine"],
                                            require_critical=not cfg["allow_subcritical"], grid=grid, **kw)
        return rep
    raise ConfigError(exp)


def dump_paths(cfg: dict, outdir: Path) -> None:
    params = cfg["params"]
    engine = cfg["engine"] or "davies_harte"
    if engine == "spectral_pinned" and params.alpha == 0:
        engine = "davies_harte"
    times = np.linspace(0.0, 2.0, 129)
    n = min(cfg["dump_paths"], cfg["replicas"])
    grid = None
    if engine == "spectral_pinned":
        grid = build_spectral_grid(params, cfg["modes"], cfg["lambda_min"], cfg["lambda_max"])
    X = sample_paths(params, times, cfg["seed"], n, engine, grid=grid, tag="dump")
    (outdir / "paths").mkdir(exist_ok=True)
    for r in range(n):
        write_path_csv(PathSample(times, X[r], params, engine, cfg["seed"], r), outdir / "paths" / f"path_{r:04d}.csv")


def write_outputs(rep: ex.ExperimentReport, cfg: dict, outdir: Path) -> None:
    doc = {
        "artifact_version": __version__,
        "config": ex._plain(echo(cfg)),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "passed": rep.passed,
        "report": rep.to_dict(),
    }
    (outdir / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    with open(outdir / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "estimate", "std_error"])
        for e, m, s in rep.curve:
            w.writerow([repr(float(e)), repr(float(m)), repr(float(s))])


def run(args) -> int:
    try:
        cfg = resolve_config(args)
        outdir = Path(cfg["out"])
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except (DomainError, ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    log.info("running %s with %s", cfg["experiment"], echo(cfg))
    rep = execute(cfg)
    write_outputs(rep, cfg, outdir)
    if cfg["dump_paths"]:
        dump_paths(cfg, outdir)
    for name, c in rep.checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}")
    return 0 if rep.passed else 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return run(args)
    parser.error("unknown command")
    return 1


if __name__ == "__main__":
    sys.exit(main())
