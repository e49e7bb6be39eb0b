import argparse
import os
import sys

from resources import (
    exit_ok,
    exit_config_error,
    exit_resource_cap,
    ConfigValidationError,
    ProblemFileError,
    ProblemValidationError,
    ResourceCapError,
    MissingSeriesError,
)
from check import check_output_dir
from ising import load_problem, brute_force_ground
from batch import load_experiment_config, run_experiment, write_outputs, load_bundle
from charts import emit_svg, chart_kinds

banner = "#" * 97


def print_banner(title):
    print(f"\n{banner}\n{'#' * 30}     {title}     {'#' * max(0, 97 - 40 - len(title))}\n{banner}\n")


# #####################################################################################
# run an experiment config
# #####################################################################################
def command_run(args):
    print_banner("starting caim experiment")
    cfg = load_experiment_config(args.config, output_dir=args.out, master_seed=args.seed)

    print("\n--------------------------------\nInput parameters\n--------------------------------\n")
    print(f"Config file: {args.config}")
    print(f"Config hash: {cfg.config_hash}")
    print(f"Output directory: {cfg.output_dir}")
    print(f"Master seed: {cfg.master_seed}")
    print("\n--------------------------------\n")

    if not check_output_dir(cfg.output_dir):
        raise OSError(f"output directory is not usable: {cfg.output_dir}")

    try:
        bundle = run_experiment(cfg)
    except ResourceCapError as e:
        print(f"Resource cap refused: {e}")
        raise
    except Exception as e:
        print(f"An unexpected error occurred: {type(e).__name__} - {e}")
        raise  # program stops

    paths = write_outputs(bundle, cfg.output_dir)
    for kind in cfg.plots:
        svg_path = os.path.join(cfg.output_dir, f"{kind}.svg")
        try:
            paths[kind] = emit_svg(bundle, kind, svg_path)
        except MissingSeriesError as e:
            print(f"Warning: skipping {kind} chart: {e}")

    print("\n--------------------------------\nOutputs\n--------------------------------\n")
    for name, path in paths.items():
        print(f"{name}: {path}")
    print_banner("finished caim experiment")
    return exit_ok


# #####################################################################################
# exact ground state of a problem file
# #####################################################################################
def command_oracle(args):
    p = load_problem(args.problem)
    print(f"Loaded problem with n={p.n} from {args.problem}")
    H0, ground_set, levels = brute_force_ground(p)
    print(f"H0: {H0:.12g}")
    print(f"ground states ({len(ground_set)}):")
    for s in ground_set:
        print("  " + " ".join("+1" if x > 0 else "-1" for x in s))
    print(f"gap H1 - H0: {levels.gap:.12g}")
    print(f"distinct levels: {len(levels.levels)}")
    return exit_ok


# #####################################################################################
# chart from a saved bundle
# #####################################################################################
def command_plot(args):
    bundle = load_bundle(args.bundle)
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.bundle)), f"{args.kind}.svg")
    emit_svg(bundle, args.kind, out)
    print(f"Chart saved to {out}")
    return exit_ok


def build_parser():
    parser = argparse.ArgumentParser(prog="caim", description="Analog Ising machine simulator and benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="experiment config JSON file")
    run.add_argument("--out", default=None, help="output directory (overrides the config)")
    run.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    run.set_defaults(func=command_run)

    oracle = sub.add_parser("oracle", help="brute-force ground state of a problem file")
    oracle.add_argument("problem", help="problem JSON file")
    oracle.set_defaults(func=command_oracle)

    plot = sub.add_parser("plot", help="render a chart from a bundle.json")
    plot.add_argument("bundle", help="bundle JSON file written by run")
    plot.add_argument("--kind", required=True, choices=chart_kinds)
    plot.add_argument("--out", default=None, help="output SVG path")
    plot.set_defaults(func=command_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigValidationError, ProblemFileError, ProblemValidationError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return exit_config_error
    except ResourceCapError as e:
        print(f"Error: {e}", file=sys.stderr)
        return exit_resource_cap


if __name__ == "__main__":
    sys.exit(main())
