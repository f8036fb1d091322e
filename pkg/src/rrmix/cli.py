"""Command-line entry point: ``rrmix simulate | fit | summarize | check``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import chainio, checks, engine, synthgen
from .data import DETERMINANTS, load_dataset
from .errors import NumericError, RRMixError
from .geweke import FAULTS
from .priors import HyperParams, default_hyperparams
from .summary import write_reports

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
ENV_SEED = "RRMIX_SEED"
ENV_THREADS = "RRMIX_THREADS"

log = logging.getLogger("rrmix")


def _err(msg):
    print(f"rrmix: error: {msg}", file=sys.stderr)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RRMixError(f"cannot read JSON config {path}: {exc}") from exc


def _env_int(name):
    v = os.environ.get(name)
    if v is None or v == "":
        return None
    try:
        return int(v)
    except ValueError as exc:
        raise RRMixError(f"{name} must be an integer, got {v!r}") from exc


# ---------------------------------------------------------------- simulate

def cmd_simulate(args):
    cfg = _read_json(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else _env_int(ENV_SEED)
    seed = seed if seed is not None else cfg.get("seed", 0)
    n = args.n if args.n is not None else cfg.get("n", 1611)
    years = args.years if args.years is not None else cfg.get("years", 29)
    first_year = args.first_year if args.first_year is not None else cfg.get("first_year", 1987)
    cov = cfg.get("covariates", args.preset)
    counts = cfg.get("n_per_year") or synthgen.split_counts(n, years)
    K = len(synthgen.PRESETS[cov]) if isinstance(cov, str) and cov in synthgen.PRESETS else (
        len(cov) if isinstance(cov, dict) else len(DETERMINANTS))
    if "truth" in cfg:
        truth = synthgen.TruthParams(**cfg["truth"])
    else:
        truth = synthgen.default_truth(K=K, J=args.J, gap=args.gap, seed=seed)
    ds, gt = synthgen.generate(truth, counts, cov_spec=cov, seed=seed, first_year=first_year)
    csv_path, truth_path = synthgen.write_simulation(ds, gt, args.out, args.truth)
    at0 = sum(r == 0.0 for r in ds.rr)
    at1 = sum(r == 1.0 for r in ds.rr)
    print(f"wrote {csv_path} ({ds.n} loans, {len(counts)} years, K={ds.K}) and {truth_path}")
    print(f"rr == 0: {at0}  rr == 1: {at1}  good-state years: {sum(gt.S)}/{len(gt.S)}")
    return EXIT_OK


# ---------------------------------------------------------------- fit

_FIT_FLAGS = ("model", "draws", "burnin", "thin", "seed", "J", "epsilon", "chains", "threads",
              "init")


def resolve_fit_config(args):
    """CLI flags beat environment variables, which beat the config file."""
    file_cfg = _read_json(args.config) if args.config else {}
    hp_overrides = file_cfg.pop("hyperparams", {})
    resolved = {k: v for k, v in file_cfg.items() if k in engine.FitConfig.__dataclass_fields__}
    unknown = set(file_cfg) - set(resolved)
    if unknown:
        raise RRMixError(f"unknown config keys: {sorted(unknown)}")
    for name, env in (("seed", ENV_SEED), ("threads", ENV_THREADS)):
        v = _env_int(env)
        if v is not None:
            resolved[name] = v
    for name in _FIT_FLAGS:
        v = getattr(args, name)
        if v is not None:
            resolved[name] = v
    if args.loan_weighted_transitions:
        resolved["loan_weighted_transitions"] = True
    if args.store_latent:
        resolved["store_latent"] = True
    if args.no_standardize:
        resolved["standardize"] = False
    cfg = engine.FitConfig.from_dict(resolved)
    if args.hyperparams:
        hp_overrides = {**hp_overrides, **_read_json(args.hyperparams)}
    return cfg, hp_overrides


def _hyperparams(cfg, K, overrides):
    if not overrides:
        return default_hyperparams(cfg.J, K)
    base = default_hyperparams(cfg.J, K).to_dict()
    base.update(overrides)
    return HyperParams.from_dict(base)


def cmd_fit(args):
    cfg, hp = resolve_fit_config(args)
    ds = load_dataset(args.data)
    h = _hyperparams(cfg, ds.K, hp)
    progress = None if args.quiet else _progress_printer()
    result = engine.fit(ds, cfg, h, progress=progress)
    chains = result if isinstance(result, list) else [result]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, ch in enumerate(chains):
        p = out if len(chains) == 1 else out.with_name(f"{out.stem}_{k}{out.suffix}")
        if args.format == "csv":
            chainio.write_chain_csv(ch, p)
        else:
            chainio.write_chain(ch, p)
        paths.append(p)
    man = chainio.manifest(chains, args.data, paths,
                           extra={"threads": cfg.threads, "format": args.format})
    man_path = Path(args.manifest) if args.manifest else out.with_suffix(".manifest.json")
    chainio.write_manifest(man, man_path)
    for ch, p in zip(chains, paths):
        print(f"wrote {p}: {len(ch)} draws x {len(ch.names)} columns "
              f"({ch.meta['wall_time_s']:.1f}s, backend {ch.meta['backend']})")
    print(f"wrote {man_path}")
    return EXIT_OK


def _progress_printer():
    state = {"last": -1}

    def report(chain_id, done, total):
        pct = 100 * done // total
        if pct // 10 != state["last"]:
            state["last"] = pct // 10
            print(f"chain {chain_id}: {done}/{total} sweeps", file=sys.stderr)

    return report


# ---------------------------------------------------------------- summarize

def cmd_summarize(args):
    chain = chainio.read_chain(args.chain)
    paths = write_reports(chain, args.out_dir, mass=args.hpd, mean_rr=args.mean_rr,
                          cycle=True if args.cycle else None)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


# ---------------------------------------------------------------- check

def cmd_check(args):
    results = checks.run_suites(args.suite, fault=args.inject_fault)
    width = max(len(f"{r.suite}/{r.name}") for r in results)
    for r in results:
        print(f"{r.suite + '/' + r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  "
              f"{r.detail}  ({r.seconds:.1f}s)")
    failed = [f"{r.suite}/{r.name}" for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _probability(v):
    x = float(v)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return x


def _positive_int(v):
    x = int(v)
    if x < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return x


def build_parser():
    p = argparse.ArgumentParser(prog="rrmix", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset with ground truth")
    s.add_argument("--preset", default="table1", choices=sorted(synthgen.PRESETS))
    s.add_argument("--config", help="generator JSON (covariates, truth, n_per_year, ...)")
    s.add_argument("--n", type=_positive_int)
    s.add_argument("--years", type=_positive_int)
    s.add_argument("--first-year", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--J", type=int, default=4)
    s.add_argument("--gap", type=float, default=1.0, help="state-1 minus state-0 intercept")
    s.add_argument("--out", default="data.csv")
    s.add_argument("--truth", help="ground-truth JSON path (default: next to --out)")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="run the Gibbs sampler on a dataset")
    f.add_argument("data")
    f.add_argument("--model", choices=engine.MODELS)
    f.add_argument("--draws", type=_positive_int)
    f.add_argument("--burnin", type=int)
    f.add_argument("--thin", type=_positive_int)
    f.add_argument("--seed", type=int)
    f.add_argument("--threads", type=_positive_int)
    f.add_argument("--chains", type=_positive_int)
    f.add_argument("--J", type=int)
    f.add_argument("--epsilon", type=float)
    f.add_argument("--init", choices=("data", "prior"))
    f.add_argument("--loan-weighted-transitions", action="store_true")
    f.add_argument("--store-latent", action="store_true")
    f.add_argument("--no-standardize", action="store_true")
    f.add_argument("--config", help="JSON with FitConfig fields and optional 'hyperparams'")
    f.add_argument("--hyperparams", help="JSON of hyperparameter overrides")
    f.add_argument("--format", choices=("binary", "csv"), default="binary")
    f.add_argument("--out", default="chain.rrc")
    f.add_argument("--manifest")
    f.add_argument("--quiet", action="store_true")
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("summarize", help="posterior tables from a chain file")
    m.add_argument("chain")
    m.add_argument("--out-dir", default="reports")
    m.add_argument("--hpd", type=_probability, default=0.95)
    m.add_argument("--mean-rr", choices=("allocated", "phi_mu"), default="allocated")
    m.add_argument("--cycle", action="store_true", help="require the cycle report")
    m.set_defaults(func=cmd_summarize)

    c = sub.add_parser("check", help="run the verification suites")
    c.add_argument("--suite", action="append", choices=sorted(checks.SUITES))
    c.add_argument("--inject-fault", choices=sorted(FAULTS))
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        _err(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except (RRMixError, ValueError, KeyError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
