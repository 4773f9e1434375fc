"""Command line front end: ``semiblind {generate,fit,sweep,bench}``.

Every command reads a YAML experiment config (``--config``). Any config
field can be overridden as ``--section.field value``; ``--seed``,
``--threads``, ``--out`` and ``--count`` are shortcuts. For ``generate``,
``--out`` is a directory receiving both dataset files; for the other
commands it is the output file. Errors are printed
as one line ``error: <CODE>: <message>`` and exit nonzero.
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import yaml

from . import cgmm, scenarios, simulator
from .config import SWEEP_TYPES, apply_overrides, parse_config
from .errors import ConfigError, DimensionMismatchError, InvalidArgumentError, SemiBlindError
from .estimators import EstimatorBank

log = logging.getLogger("semiblind")

EXIT_ERROR = 2
EXIT_IO = 3


def _load(args, extra):
    path = Path(args.config)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}".replace("\n", " ")) from None
    if raw is None:
        raw = {}
    overrides = dict(extra)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "count", None) is not None:
        overrides["scenario.train_count"] = args.count
        overrides["scenario.test_count"] = args.count
    return parse_config(apply_overrides(raw, overrides), base_dir=path.parent)


def _executor(threads):
    return ThreadPoolExecutor(max_workers=threads) if threads > 1 else None


def cmd_generate(cfg, args):
    sc = cfg.scenario
    geometry, scenario = sc.geometry(), sc.cluster_scenario()
    pool = _executor(args.threads)
    try:
        for name, count, stream in (("train", sc.train_count, 0), ("test", sc.test_count, 1)):
            ds = scenarios.generate_dataset(
                scenario, geometry, count, sc.normalization, seed=[cfg.seed, stream], executor=pool
            )
            path = cfg.path(f"{name}_path")
            if args.out:
                path = Path(args.out) / path.name
            scenarios.write_dataset(ds, path)
            print(f"{name}: {path} count={len(ds)} M={ds.antennas} mean_power={ds.mean_power():.6g}")
    finally:
        if pool is not None:
            pool.shutdown()


def cmd_fit(cfg, args):
    train = scenarios.read_dataset(cfg.path("train_path"))
    if train.antennas != cfg.antennas:
        raise DimensionMismatchError(
            f"training set has M={train.antennas}, config geometry gives M={cfg.antennas}"
        )
    model, report = cgmm.fit(train, cfg.em_config())
    model_path = Path(args.out) if args.out else cfg.path("model_path")
    cgmm.save_model(model, model_path)
    cgmm.write_fit_report(report, cfg.path("report_path"))
    for event in report.events:
        log.warning(event)
    print(f"model: {model_path} K={model.components} M={model.dim} "
          f"iterations={report.iterations} log_likelihood={report.log_likelihood[-1]:.10g}")


def _load_model_and_sets(cfg):
    model = cgmm.load_model(cfg.path("model_path"))
    if model.dim != cfg.antennas:
        raise DimensionMismatchError(f"model has M={model.dim}, config geometry gives M={cfg.antennas}")
    train = scenarios.read_dataset(cfg.path("train_path"), antennas=cfg.antennas)
    test = scenarios.read_dataset(cfg.path("test_path"), antennas=cfg.antennas)
    return model, train, test


def cmd_sweep(cfg, args):
    model, train, test = _load_model_and_sets(cfg)
    bank = EstimatorBank(model, train.covariance())
    result = simulator.run_sweep(
        cfg.system_config(),
        SWEEP_TYPES[cfg.sweep.type],
        cfg.sweep.grid,
        test,
        cfg.sweep.trials,
        seed=cfg.seed,
        bank=bank,
        estimators=cfg.sweep.estimators,
        threads=args.threads,
    )
    out = Path(args.out) if args.out else cfg.path("output_path")
    result.write_csv(out)
    print(f"sweep: {out} rows={len(result.grid) * len(result.nmse)}")


def cmd_bench(cfg, args):
    model = cgmm.load_model(cfg.path("model_path"))
    noise = [simulator.snr_to_noise_var(s) for s in cfg.bench.snr_db]
    rows = simulator.benchmark_precompute(
        model, noise, cfg.bench.repetitions, users=cfg.system.users, seed=cfg.seed
    )
    out = Path(args.out) if args.out else cfg.path("bench_path")
    simulator.write_benchmark_csv(rows, out)
    by = {(r["estimator"], r["noise_var"]): r["mean_ns"] for r in rows}
    for s2 in noise:
        ratio = by[("sub_gmm", s2)] / by[("proj_gmm", s2)]
        print(f"bench: noise_var={s2:.6g} sub_gmm/proj_gmm time ratio={ratio:.3f}")
    print(f"bench: {out} rows={len(rows)}")


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="semiblind", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out")
        if name == "generate":
            p.add_argument("--count", type=int)
    return parser


def _parse_overrides(extra):
    overrides = {}
    i = 0
    while i < len(extra):
        key = extra[i]
        if not key.startswith("--") or "." not in key and "=" not in key:
            raise ConfigError(key, "unrecognized argument; overrides take the form --section.field value")
        key = key[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(key, "override is missing a value")
            value = extra[i + 1]
            i += 2
        overrides[key] = value
    return overrides


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise InvalidArgumentError("--threads must be >= 1")
        cfg = _load(args, _parse_overrides(extra))
        COMMANDS[args.command](cfg, args)
    except SemiBlindError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: IO_ERROR: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
