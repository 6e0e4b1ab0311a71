"""
Full-scale reproduction driver
==============================

Runs the whole pipeline on a list of raw CSV files: preprocessing, the
18-configuration x 10-rate grid, winner reports with significance, the
neighbourhood correlation table and the leave-two-out regime classifier.

Only Iris, Wine and Sonar ship with the package.  For the other datasets,
write a JSON list like

    [{"csv": "data/heart.csv", "target": "num", "name": "Heart Disease",
      "categorical": ["cp", "thal"]}, ...]

and pass it with --datasets.  With --paper-scale the grid uses 200 repeats
(roughly a CPU-week for 36 datasets); without it, 20.

    python demos/reproduce_paper.py --out runs/full --paper-scale --datasets my_datasets.json
"""

import argparse
import json
import os
import sys

from brforest import cli
from brforest.data import BUNDLED, bundled_path
from brforest.experiment import read_winners_csv


def _run(argv):
    code = cli.main(argv)
    if code != 0:
        sys.exit(f"step failed ({code}): brforest {' '.join(argv)}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="runs/reproduction")
    ap.add_argument("--datasets", help="JSON list of {csv, target, name, categorical}")
    ap.add_argument("--paper-scale", action="store_true")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    entries = [{"csv": str(bundled_path(f)), "target": t, "name": n} for f, t, n in BUNDLED.values()]
    if args.datasets:
        with open(args.datasets) as fh:
            entries += json.load(fh)

    ds_dir = os.path.join(args.out, "datasets")
    manifests = []
    for e in entries:
        argv = ["preprocess", e["csv"], "--target", e["target"], "--name", e["name"], "--out", ds_dir]
        if e.get("categorical"):
            argv += ["--categorical", ",".join(e["categorical"])]
        _run(argv)
        manifests.append(os.path.join(ds_dir, e["name"].replace(" ", "_").replace("/", "_") + ".json"))

    threads = ["--threads", str(args.threads)] if args.threads else []
    grid_dir = os.path.join(args.out, "grids")
    _run(["grid", *manifests, "--out", grid_dir, "--seed", str(args.seed), *threads]
         + (["--paper-scale"] if args.paper_scale else []))

    grids = sorted(os.path.join(grid_dir, f) for f in os.listdir(grid_dir) if f.endswith(".grid.csv"))
    report_dir = os.path.join(args.out, "report")
    _run(["report", *grids, "--out", report_dir])

    ours = {r.dataset: r for r in read_winners_csv(os.path.join(report_dir, "winners.csv"))}
    published = {r.dataset: r for r in read_winners_csv(bundled_path("published_winners.csv"))}
    print(f"\n{'dataset':<32}{'acc %':>8}{'ref %':>8}{'br':>6}{'ref br':>8}")
    for name, r in ours.items():
        p = published.get(name)
        ref_acc = f"{100 * p.mean_accuracy:.3f}" if p else "-"
        ref_br = f"{p.best_br:g}" if p else "-"
        print(f"{name:<32}{100 * r.mean_accuracy:>8.3f}{ref_acc:>8}{r.best_br:>6g}{ref_br:>8}")

    if len(ours) >= 4:
        for label, extra in (("all", []), ("undisputed", ["--p-threshold", "0.01"])):
            _run(["meta", "--grids", *grids, "--manifests", *manifests, "--seed", str(args.seed),
                  "--out", os.path.join(args.out, f"meta_{label}"), *threads, *extra])
    else:
        print("fewer than four datasets: skipping the regime classifier")


if __name__ == "__main__":
    main()
