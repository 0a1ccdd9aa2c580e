"""Command line entry point: ``uwbnet <subcommand>``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import community, pipeline, synthgen, trace
from .errors import UwbNetError
from .pipeline import PipelineConfig


def _seconds(text):
    # integral values stay ints so the config hash matches the JSON default
    value = float(text)
    return int(value) if value.is_integer() else value


def _config(args):
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {
        "input_format": "format", "anonymize_seed": "anonymize_seed", "dims": "dims",
        "warmup": "warmup", "gap_threshold": "gap_threshold", "sigma_meas": "sigma_meas",
        "sigma_accel": "sigma_accel", "thresholds": "thresholds", "min_weight": "min_weight",
        "window": "window", "window_min_weight": "window_min_weight", "community_seed": "seed",
        "trials": "trials", "bin_width": "bin_width", "report_pairs": "pairs", "pair_seed": "pair_seed",
        "track": "track", "workers": "workers",
    }
    for field_name, arg in overrides.items():
        value = getattr(args, arg, None)
        if value is not None:
            setattr(cfg, field_name, value)
    if getattr(args, "lenient", False):
        cfg.strict = False
    if getattr(args, "svg", False):
        cfg.svg = True
    if getattr(args, "unpruned_metrics", False):
        cfg.metrics_pruned = False
    return cfg.validate()


def _add_common(p, *groups):
    p.add_argument("--config", help="pipeline config JSON; flags override its fields")
    if "thresholds" in groups:
        p.add_argument("--thresholds", type=float, nargs="+", help="contact distance thresholds (m)")
    if "community" in groups:
        p.add_argument("--seed", type=int, help="community search seed")
        p.add_argument("--trials", type=int, help="seeded restarts per graph")
        p.add_argument("--workers", type=int, help="threads for independent graphs")


def build_parser():
    parser = argparse.ArgumentParser(prog="uwbnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="whole pipeline from a config file")
    _add_common(p)
    p.add_argument("-i", "--input", help="raw positioning export (overrides config)")
    p.add_argument("-o", "--output", help="artifact directory (overrides config)")
    p.add_argument("--workers", type=int)
    p.add_argument("--svg", action="store_true", help="also draw alluvial SVGs")

    p = sub.add_parser("ingest", help="raw export -> 1 Hz trajectories")
    _add_common(p)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True, help="stage directory")
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--lenient", action="store_true", help="skip malformed records instead of failing")
    p.add_argument("--anonymize-seed", type=int)
    p.add_argument("--dims", type=int, choices=[2, 3])

    p = sub.add_parser("smooth", help="absences + Kalman/RTS smoothing")
    _add_common(p)
    p.add_argument("-i", "--input", required=True, help="trajectories.csv from ingest")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--warmup", type=int)
    p.add_argument("--gap-threshold", type=int)
    p.add_argument("--sigma-meas", type=float)
    p.add_argument("--sigma-accel", type=float)

    p = sub.add_parser("contacts", help="pair totals, histograms, pair series")
    _add_common(p, "thresholds")
    p.add_argument("-i", "--input", required=True, help="smoothed.csv")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--bin-width", type=float)
    p.add_argument("--pairs", type=int, help="number of randomly selected pairs to report")
    p.add_argument("--pair-seed", type=int)

    p = sub.add_parser("network", help="pruned networks and metrics per threshold")
    _add_common(p)
    p.add_argument("-i", "--input", required=True, help="contacts stage directory")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--min-weight", type=int)
    p.add_argument("--unpruned-metrics", action="store_true")

    p = sub.add_parser("communities", help="map-equation communities of graph files")
    _add_common(p, "community")
    p.add_argument("-i", "--input", required=True, help="graph .graphml/.csv or network directory")
    p.add_argument("-o", "--output", help="output directory; omit to print the partition CSV")

    p = sub.add_parser("dynamic", help="windowed communities, flows, alluvial data")
    _add_common(p, "thresholds", "community")
    p.add_argument("-i", "--input", required=True, help="smoothed.csv")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--window", type=int)
    p.add_argument("--window-min-weight", type=_seconds,
                   help="contact seconds an edge needs inside one window (default 60)")
    p.add_argument("--track", nargs="+", help="participants to track across windows")
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("synth", help="synthetic scenario trace + ground truth")
    p.add_argument("--scenario", help="scenario JSON (default: built-in default scenario)")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", help="trace file (.csv or .jsonl)")
    p.add_argument("--truth", help="ground-truth CSV path (default: <trace>_truth.csv)")
    p.add_argument("--window", type=int, default=300)
    p.add_argument("--dump-default", metavar="PATH", help="write the default scenario JSON and exit")

    p = sub.add_parser("report", help="figure data from intermediate files")
    _add_common(p)
    p.add_argument("--kind", required=True, choices=["fig4", "fig5", "fig6", "fig8", "alluvial-svg"])
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--bin-width", type=float)
    p.add_argument("--pairs", type=int)
    p.add_argument("--pair-seed", type=int)
    return parser


def _synth(args):
    if args.dump_default:
        Path(args.dump_default).write_text(synthgen.default_scenario().to_json(), encoding="utf-8")
        return 0
    if not args.output:
        raise SystemExit("synth: -o/--output is required")
    if args.scenario:
        sc = synthgen.Scenario.from_json(Path(args.scenario).read_text(encoding="utf-8"))
    else:
        sc = synthgen.default_scenario()
    if args.seed is not None:
        sc.seed = args.seed
    raw, truth = synthgen.generate(sc)
    trace.write_raw(raw, args.output)
    out = Path(args.output)
    truth_path = args.truth or out.with_name(out.stem + "_truth.csv")
    with open(truth_path, "w", encoding="utf-8", newline="") as fh:
        synthgen.write_ground_truth(truth, fh, window=args.window)
    return 0


def _communities(args, cfg):
    if args.output:
        pipeline.communities_stage(cfg, args.input, args.output)
        return 0
    files = pipeline._graph_files(args.input)
    for f in files:
        g, _ = pipeline.read_graph_file(f)
        part = community.detect_communities(g, seed=cfg.community_seed, trials=cfg.trials)
        community.write_partition(part, sys.stdout)
    return 0


def dispatch(args):
    cmd = args.command
    if cmd == "synth":
        return _synth(args)
    cfg = _config(args)
    if cmd == "run":
        if args.input:
            cfg.input = args.input
        if args.output:
            cfg.output = args.output
        if not cfg.input:
            raise SystemExit("run: no input given (config 'input' or -i)")
        pipeline.run(cfg)
        return 0
    if cmd == "ingest":
        pipeline.ingest(cfg, args.input, args.output)
    elif cmd == "smooth":
        pipeline.smooth_stage(cfg, args.input, args.output)
    elif cmd == "contacts":
        pipeline.contacts_stage(cfg, args.input, args.output)
    elif cmd == "network":
        pipeline.network_stage(cfg, args.input, args.output)
    elif cmd == "communities":
        return _communities(args, cfg)
    elif cmd == "dynamic":
        pipeline.dynamic_stage(cfg, args.input, args.output)
    elif cmd == "report":
        pipeline.report(args.kind, args.input, args.output, cfg)
    return 0


def main(argv=None):
    pipeline.configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except pipeline.StageFailed as err:
        print(f"uwbnet: {err}", file=sys.stderr)
        return 1
    except (UwbNetError, OSError) as err:
        print(f"uwbnet {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
