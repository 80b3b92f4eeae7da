"""Main CLI entry point for htprox"""
import argparse
import logging
import sys
from typing import Dict, List, Optional

from pydantic import ValidationError

from cli.config import ConfigManager, ExperimentConfig, parse_override_value
from htprox.errors import ConfigError, HtproxError

# subcommand -> experiment kinds it accepts; the first is the built-in default
SUBCOMMAND_KINDS = {
    "separation": ("separation",),
    "bounds": ("bounds_overlay",),
    "validate": ("validate", "validate_rng", "validate_oracles"),
    "run": ("single_run",),
}

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htprox",
        description="htprox - proximal samplers for heavy-tailed targets",
        epilog="Config keys can be overridden with dotted flags, e.g. --sampler.eta=0.01",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, metavar="PATH", help="JSON experiment config")
    common.add_argument(
        "--out",
        type=str,
        metavar="DIR",
        help="Output directory (overrides config out and $HTPROX_OUT; default results/)",
    )
    common.add_argument("--seed", type=int, help="Root seed (overrides config)")
    common.add_argument("--threads", type=int, default=1, help="Worker processes for chains")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    subparsers.add_parser(
        "separation", parents=[common], help="Gaussian vs. stable proximal sampler comparison"
    )
    subparsers.add_parser("bounds", parents=[common], help="Evaluate theory curves")
    subparsers.add_parser(
        "validate",
        parents=[common],
        help="Run the validation suite (validate_rng / validate_oracles)",
    )
    subparsers.add_parser("run", parents=[common], help="Run a single sampler configuration")

    summarize_parser = subparsers.add_parser(
        "summarize", help="Recompute the separation verdict from a persisted CSV"
    )
    summarize_parser.add_argument("csv", type=str, help="Path to separation.csv")
    summarize_parser.add_argument("--config", type=str, metavar="PATH", help="Config for epsilons")
    summarize_parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    subparsers.add_parser("version", help="Show version information")
    return parser


def parse_overrides(extra: List[str]) -> Dict[str, object]:
    """--a.b=v or --a.b v tokens into a {path: value} mapping."""
    overrides = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--") or len(token) <= 2:
            raise ConfigError(f"unrecognized argument '{token}'")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        elif i + 1 < len(extra) and not extra[i + 1].startswith("--"):
            i += 1
            value = extra[i]
        else:
            raise ConfigError(f"override '{token}' has no value")
        overrides[key] = parse_override_value(value)
        i += 1
    return overrides


def load_experiment(args, extra: List[str]) -> ExperimentConfig:
    kinds = SUBCOMMAND_KINDS[args.command]
    overrides = parse_overrides(extra)
    if args.seed is not None:
        overrides["seed"] = args.seed
    manager = ConfigManager(args.config)
    config = manager.load_config(experiment=kinds[0], overrides=overrides)
    if config.experiment not in kinds:
        raise ConfigError(
            f"'{args.command}' cannot run experiment '{config.experiment}' "
            f"(expected one of {', '.join(kinds)})"
        )
    return config


def _banner(text: str):
    print()
    print("=" * 60)
    print(text)
    print("=" * 60)


def _print_separation(summary: dict):
    for experiment, entry in summary["experiments"].items():
        print()
        print(f"{experiment}  (noise floor {entry['noise_floor']:.4f})")
        for name, s in entry["samplers"].items():
            fit = s["fit"]
            fit_text = "no fit"
            if fit is not None:
                fit_text = f"{fit['law']} slope={fit['slope']:.4g} R²={fit['r2']:.3f}"
            print(f"  {name:<18} eta={s['eta']:.4g}  {fit_text}")
            if name == "stable_proximal":
                print(f"    {'✓' if s['monotone'] else '✗'} monotone within 2 SE")
            if s["lower_bound_violations"]:
                print(f"    ✗ lower bound exceeds TV + 3 SE at k={s['lower_bound_violations']}")
        verdict = entry["verdict"]
        if verdict is None:
            continue
        print("  iterations to ε:")
        for eps, row in verdict["iterations_to_eps"].items():
            print(f"    ε={eps:<6} " + "  ".join(f"{k}={v}" for k, v in row.items()))
        for name, passed in verdict["checks"].items():
            if passed is not None:
                print(f"    {'✓' if passed else '✗'} {name}")
        mark = "✓" if verdict["separated"] else "✗"
        ratio = verdict["tv_ratio_at_k_star"]
        print(f"  {mark} separated (K*={verdict['k_star']}, TV ratio {ratio})")
    stable = summary.get("stable_under_multipliers")
    if stable is not None:
        print()
        print(f"{'✓' if stable else '✗'} ordering stable across c0 multipliers")


def cmd_separation(config: ExperimentConfig, out_dir, threads: int) -> int:
    from cli.experiments import run_separation

    summary = run_separation(config, out_dir, threads=threads)
    _banner("Separation experiment")
    _print_separation(summary)
    print()
    print(f"Results written to: {out_dir}")
    if not summary["lower_bounds_sound"]:
        print("✗ a theory lower bound exceeded the measured TV")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_bounds(config: ExperimentConfig, out_dir) -> int:
    from cli.experiments import run_bounds_overlay

    summary = run_bounds_overlay(config, out_dir)
    _banner("Theory curves")
    print(f"Curves: {', '.join(summary['curves'])}")
    for eps, records in summary["complexity"].items():
        print(f"  ε={eps}")
        for name, rec in records.items():
            print(f"    {name:<24} {rec['iterations']:.4g}   {rec['formula']}")
    print()
    print(f"Results written to: {out_dir}")
    return EXIT_OK


def cmd_validate(config: ExperimentConfig, out_dir) -> int:
    from cli.validate import run_validation

    report = run_validation(config, out_dir)
    _banner("Validation suite")
    for r in report.results:
        mark = "✓" if r.passed else "✗"
        print(f"{mark} {r.name:<26} statistic={r.statistic:.6g}  threshold={r.threshold:.6g}")
    print()
    if report.passed:
        print(f"✓ All {len(report.results)} checks passed")
        return EXIT_OK
    failed = sum(not r.passed for r in report.results)
    print(f"✗ {failed} of {len(report.results)} checks failed")
    return EXIT_FAILURE


def cmd_run(config: ExperimentConfig, out_dir, threads: int) -> int:
    from cli.experiments import run_single

    summary = run_single(config, out_dir, threads=threads)
    _banner(f"Single run: {summary['sampler']} (eta={summary['eta']:.4g})")
    for kind, value in summary["final"].items():
        print(f"  final {kind}: {value:.6g}")
    print()
    print(f"Results written to: {out_dir}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    from cli.experiments import summarize_csv

    manager = ConfigManager(args.config)
    config = manager.load_config(experiment="separation")
    try:
        summary = summarize_csv(args.csv, config.epsilons)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read {args.csv}: {e}") from e
    _banner(f"Summary of {args.csv}")
    _print_separation(summary)
    return EXIT_OK


def dispatch(args, extra: List[str]) -> int:
    if args.command == "version":
        from cli import __version__

        print(f"htprox version {__version__}")
        return EXIT_OK
    if args.command == "summarize":
        if extra:
            raise ConfigError(f"unrecognized arguments: {' '.join(extra)}")
        return cmd_summarize(args)

    config = load_experiment(args, extra)
    out_dir = ConfigManager.resolve_out(config, args.out)
    ConfigManager.save_config(config, out_dir)
    if args.command == "separation":
        return cmd_separation(config, out_dir, args.threads)
    if args.command == "bounds":
        return cmd_bounds(config, out_dir)
    if args.command == "validate":
        return cmd_validate(config, out_dir)
    return cmd_run(config, out_dir, args.threads)


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI function"""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    if args.command is None:
        parser.print_help()
        print()
        print("Quick start:")
        print("  1. Check the generators and oracles: htprox validate")
        print("  2. Run the sampler comparison:       htprox separation --out results/")
        print("  3. Overlay the theory curves:        htprox bounds --out results/")
        print()
        return EXIT_OK

    try:
        return dispatch(args, extra)
    except (ConfigError, ValidationError) as e:
        print(f"✗ Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except HtproxError as e:
        print(f"✗ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
