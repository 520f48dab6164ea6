"""Learnable vs uniform graphs on the directional cohort; prints mean AUROC per graph source."""

import argparse
import json

from fbn import experiments


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    res = experiments.run_directional(experiments.directional_config(args.seed), jobs=args.jobs)
    out = {r.name: r.summary() for r in (res.learnable, res.uniform)}
    out["seconds"] = round(res.seconds, 1)
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
