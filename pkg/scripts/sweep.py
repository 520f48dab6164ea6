"""Ablation, graph-source comparison and time-series baselines on one synthetic cohort.

Writes one comparison directory per experiment under --out.
"""

import argparse
from pathlib import Path

from fbn import harness
from fbn.config import RunConfig, desk_config, parse_overrides
from fbn.dataset import generate_synthetic


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--preset", choices=("desk", "paper"), default="desk")
    ap.add_argument("--override", action="append", default=[])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", choices=("ablation", "graphs", "timeseries"), nargs="+",
                    default=["ablation", "graphs", "timeseries"])
    args = ap.parse_args()
    cfg = (desk_config() if args.preset == "desk" else RunConfig()).with_overrides(parse_overrides(args.override))
    cohort = generate_synthetic(cfg.data)
    runners = {
        "ablation": harness.run_ablation,
        "graphs": harness.run_graph_comparison,
        "timeseries": harness.run_timeseries_baselines,
    }
    for name in args.only:
        records = runners[name](cohort, cfg, jobs=args.jobs)
        harness.write_comparison(records, cohort, args.out / name)
        for key, rec in records.items():
            print(f"{name:10s} {key:16s} AUROC {rec.mean_auroc:.3f} +/- {rec.std_auroc:.3f}", flush=True)


if __name__ == "__main__":
    main()
