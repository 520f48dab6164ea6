"""``fbn`` command line: data generation, training, ablations, graph comparisons, analysis, self-test."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import harness
from .analysis import analyze_graphs, load_graph_set
from .config import ConfigError, RunConfig, desk_config, parse_overrides
from .dataset import CohortFormatError, generate_synthetic, load_cohort, save_cohort

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("fbn")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fbn", description=__doc__)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def common(sp, data=True):
        sp.add_argument("--config", help="flat dotted-key JSON config (defaults to the desk preset)")
        sp.add_argument("--preset", choices=("desk", "paper"), default="desk", help="base settings when no --config")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        sp.add_argument("--seed", type=int, help="master seed (also seeds the synthetic generator)")
        sp.add_argument("--out", required=True, help="output directory")
        if data:
            sp.add_argument("--data", help="cohort directory; omitted means generate from data.* settings")
            sp.add_argument("--jobs", type=int, default=1, help="parallel fold-runs")

    common(sub.add_parser("gen-data", help="write a synthetic cohort"), data=False)
    common(sub.add_parser("train", help="cross-validate one configuration"))
    common(sub.add_parser("ablate", help="CE / CE+GL / CE+SL / FULL loss variants"))
    cg = sub.add_parser("compare-graphs", help="learnable vs Pearson vs uniform graphs")
    common(cg)
    cg.add_argument("--timeseries", action="store_true", help="also run encoder+MLP baselines")
    an = sub.add_parser("analyze", help="heatmaps, edge t-tests and module scores of exported graphs")
    an.add_argument("--run", required=True, help="run directory (or its graphs/ directory)")
    an.add_argument("--out", help="output directory (default: <run>/analysis)")
    an.add_argument("--bonferroni", action="store_true", help="divide the 0.05 threshold by the number of edges")
    st = sub.add_parser("selftest", help="gradient checks and loss-identity oracles")
    st.add_argument("--quick", action="store_true", help="skip the end-to-end gradient checks")
    return p


def _config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = desk_config() if args.preset == "desk" else RunConfig()
    overrides = parse_overrides(args.override)
    if args.seed is not None:
        for key in ("seed", "data.seed"):
            if key in overrides and overrides[key] != args.seed:
                raise ConfigError(f"--seed {args.seed} conflicts with override {key}={overrides[key]!r}")
            overrides[key] = args.seed
    return cfg.with_overrides(overrides)


def _cohort(args, cfg: RunConfig):
    if getattr(args, "data", None):
        return load_cohort(args.data)
    return generate_synthetic(cfg.data)


def _cmd_gen_data(args, cfg):
    harness.write_config_echo(cfg, args.out)
    cohort = generate_synthetic(cfg.data)
    save_cohort(cohort, args.out)
    print(f"wrote {cohort.n} samples ({cohort.v} ROIs x {cohort.t} steps) to {args.out}")


def _cmd_train(args, cfg):
    harness.write_config_echo(cfg, args.out)
    cohort = _cohort(args, cfg)
    record = harness.cross_validate(cohort, cfg, args.jobs, name=cfg.graph.source)
    harness.write_run_dir(record, cohort, args.out)
    print(f"{record.name}: AUROC {record.mean_auroc:.4f} +/- {record.std_auroc:.4f} over {len(record.folds)} runs")


def _report(records):
    for name, r in records.items():
        print(f"{name:16s} AUROC {r.mean_auroc:.4f} +/- {r.std_auroc:.4f}")


def _cmd_ablate(args, cfg):
    harness.write_config_echo(cfg, args.out)
    cohort = _cohort(args, cfg)
    records = harness.run_ablation(cohort, cfg, args.jobs)
    harness.write_comparison(records, cohort, args.out)
    _report(records)


def _cmd_compare(args, cfg):
    harness.write_config_echo(cfg, args.out)
    cohort = _cohort(args, cfg)
    records = harness.run_graph_comparison(cohort, cfg, args.jobs)
    if args.timeseries:
        records.update(harness.run_timeseries_baselines(cohort, cfg, args.jobs))
    harness.write_comparison(records, cohort, args.out)
    _report(records)


def _cmd_analyze(args):
    run = Path(args.run)
    graphs_dir = run / "graphs" if (run / "graphs").is_dir() else run
    out = Path(args.out) if args.out else run / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    echo = {"run": str(run), "graphs": str(graphs_dir), "bonferroni": args.bonferroni, "threshold": 0.05}
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    meta = analyze_graphs(load_graph_set(graphs_dir), out, bonferroni=args.bonferroni)
    print(f"{meta['significant_edges']} significant edges; top modules: {', '.join(meta['top3'])}")


def _cmd_selftest(args):
    from . import selftest

    checks = [selftest.check_op(name) for name in selftest.OP_CASES]
    if not args.quick:
        checks += [selftest.check_end_to_end("cnn"), selftest.check_end_to_end("gru")]
    checks += selftest.check_loss_identities()
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.ok]
    if failed:
        raise harness.NumericalFailure(f"selftest failed: {', '.join(failed)}")


def _setup_logging() -> None:
    level = os.environ.get("FBN_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )


def main(argv=None) -> int:
    _setup_logging()
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("fbn: error: a command is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "analyze":
            _cmd_analyze(args)
        elif args.command == "selftest":
            _cmd_selftest(args)
        else:
            cfg = _config(args)
            {"gen-data": _cmd_gen_data, "train": _cmd_train, "ablate": _cmd_ablate, "compare-graphs": _cmd_compare}[
                args.command
            ](args, cfg)
    except ConfigError as exc:
        print(f"fbn: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except harness.NumericalFailure as exc:
        print(f"fbn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CohortFormatError, harness.FoldInfeasible, ValueError, OSError) as exc:
        print(f"fbn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
