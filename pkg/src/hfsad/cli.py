"""Command-line entry point: ``hfsad run | template | verify``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""

import argparse
import logging
import sys

import numpy as np

from . import harness

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("hfsad")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="hfsad", description="Hierarchical federated smoothing ADMM benchmark")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write metrics")
    r.add_argument("--config", help="INI config (defaults to the reference configuration)")
    r.add_argument("--scenario", choices=harness.SCENARIOS)
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=_u64)
    r.add_argument("--output", required=True, help="output directory")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--workers", type=int, default=1)

    t = sub.add_parser("template", help="write the annotated default config")
    t.add_argument("--output", required=True)

    v = sub.add_parser("verify", help="prox oracle and invariant self-checks")
    v.add_argument("--cases", type=int, default=1000)
    v.add_argument("--seed", type=_u64, default=0)
    return p


def _apply_overrides(config, args):
    from dataclasses import replace

    run_cfg = config.run
    if args.trials is not None:
        if args.trials < 1:
            raise harness.ConfigError("trials must be >= 1")
        run_cfg = replace(run_cfg, trials=args.trials)
    if args.seed is not None:
        run_cfg = replace(run_cfg, seed=args.seed)
    scenario = harness.preset(args.scenario) if args.scenario else config.scenario
    return replace(config, run=run_cfg, scenario=scenario)


def cmd_run(args):
    config = _apply_overrides(harness.load_config(args.config), args)
    if args.workers < 1:
        raise harness.ConfigError("workers must be >= 1")
    log.info("scenario %s, %d trial(s), seed %d", config.scenario.name, config.run.trials,
             config.run.seed)
    records = harness.run_trials(config, workers=args.workers, dump_dir=args.output)
    for path in harness.write_outputs(records, config, args.output, args.format):
        print(path)
    return EXIT_OK


def invariant_checks(n=10_000, seed=0):
    """Conservation of the joint (z, q) step and exactness of the schedules."""
    from ._rng import derive_rng
    from .engine import joint_zq_update
    from .prox_ops import PenaltySpec
    from .smoothing import schedule_params

    rng = derive_rng(seed, 0, "verify", 1000)
    worst = 0.0
    for _ in range(n):
        m = int(rng.integers(1, 30))
        a, b = rng.normal(0, 3, m), rng.normal(0, 3, m)
        spec = PenaltySpec.l1(weight=float(rng.uniform(0, 5)))
        z, q = joint_zq_update(a, b, spec, float(np.exp(rng.uniform(-8, 1))),
                               float(np.exp(rng.uniform(-2, 4))))
        worst = max(worst, float(np.max(np.abs(z + q - a - b))))
    out = [("zq_conservation", worst, worst <= 1e-12)]

    k = np.arange(1, 10**6 + 1)
    sigma, mu = schedule_params(k, 3.7, 1.3)
    root = np.sqrt(k.astype(float))
    dev = max(float(np.max(np.abs(sigma / root / 3.7 - 1))), float(np.max(np.abs(mu * root / 1.3 - 1))))
    out.append(("schedule_exactness", dev, dev <= 4 * np.finfo(float).eps))
    return out


def cmd_verify(args):
    from .oracles import run_prox_suite

    results = run_prox_suite(n=args.cases, seed=args.seed) + invariant_checks(seed=args.seed)
    for name, err, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<20} max_err={err:.3e}")
    return EXIT_OK if all(ok for _, _, ok in results) else EXIT_RUNTIME


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "template":
            print(harness.write_template(args.output))
            return EXIT_OK
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_run(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
