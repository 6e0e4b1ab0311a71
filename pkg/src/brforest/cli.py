"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import traceback

import numpy as np

from . import data, experiment, forest, meta

log = logging.getLogger("brforest")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
BR_WARN = 10.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(args, fallback=0) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("BRFOREST_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"BRFOREST_SEED must be an integer, got {env!r}")
    return fallback


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


def _write(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _stem(name: str) -> str:
    return name.replace(" ", "_").replace("/", "_")


# ---------------------------------------------------------------------------
# preprocess / synth


def cmd_preprocess(args) -> int:
    if os.path.isfile(args.input) and os.path.getsize(args.input) == 0:
        raise UsageError(f"{args.input} is empty")
    hints = [h for h in (args.categorical or "").split(",") if h]
    markers = data.MISSING_MARKERS if args.missing is None else frozenset(
        m.strip().lower() for m in args.missing.split(","))
    raw = data.load_csv(args.input, args.target, hints, args.delimiter, markers)
    name = args.name or os.path.splitext(os.path.basename(args.input))[0]
    ds = data.preprocess(raw, name=name)
    data.save_dataset(ds, args.out)
    print(ds.summary_line())
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = _seed(args)
    if args.generator == "hypercube":
        spec = data.SynthSpec(args.n_samples, args.n_features, args.n_classes,
                              args.clusters_per_class, args.class_sep, seed)
        ds = data.synth_classification(spec)
    else:
        gen = {"waveform": data.breiman_waveform, "twonorm": data.breiman_twonorm,
               "threenorm": data.breiman_threenorm, "ringnorm": data.breiman_ringnorm}[args.generator]
        ds = gen(n_samples=args.n_samples, seed=seed)
    if args.name:
        ds.name = args.name
    data.save_dataset(ds, args.out)
    print(ds.summary_line())
    return EXIT_OK


# ---------------------------------------------------------------------------
# grid


def _grid_settings(args):
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    manifests = list(args.manifests) or cfg.get("datasets", [])
    if args.config:
        base = os.path.dirname(os.path.abspath(args.config))
        manifests = [m if os.path.isabs(m) else os.path.join(base, m) for m in manifests]
    if not manifests:
        raise UsageError("no datasets given")
    scale = "paper" if args.paper_scale else cfg.get("scale", "desk")
    repeats = args.repeats or cfg.get("repeats") or (
        experiment.PAPER_REPEATS if scale == "paper" else experiment.DESK_REPEATS)
    brs = args.brs or cfg.get("br_values") or list(experiment.PAPER_BRS)
    names = args.configs or cfg.get("configs")
    configs = forest.named_configs()
    if names:
        try:
            configs = [forest.config_by_name(n) for n in names]
        except KeyError as exc:
            raise UsageError(str(exc))
    out = args.out or cfg.get("output") or "."
    seed = _seed(args, cfg.get("seed", 0))
    return manifests, experiment.GridSpec(configs, tuple(float(b) for b in brs), int(repeats), seed), out


def _read_existing(path):
    """Rows already on disk, keyed by (config, br, repeat, fold)."""
    done = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return done
        if tuple(header) != experiment.CSV_HEADER:
            raise data.DataError(f"{path}: not a grid result file")
        for d, c, br, r, f, a in reader:
            key = (c, float(br), int(r), int(f))
            if key in done and done[key] != float(a):
                raise KeyCollision(f"{path}: conflicting values for cell {key}")
            done[key] = float(a)
    return done


class KeyCollision(data.DataError):
    pass


def cmd_grid(args) -> int:
    manifests, spec, out = _grid_settings(args)
    os.makedirs(out, exist_ok=True)
    threads = _threads(args)
    for manifest in manifests:
        ds = data.load_dataset(manifest)
        path = os.path.join(out, f"{_stem(ds.name)}.grid.csv")
        sidecar = os.path.join(out, f"{_stem(ds.name)}.grid.json")
        spec_doc = {"dataset": ds.name, "seed": spec.seed, "repeats": spec.repeats,
                    "br_values": list(spec.br_values), "configs": [c.name for c in spec.configs]}

        done = {}
        if os.path.exists(path) and not args.force:
            if os.path.exists(sidecar):
                with open(sidecar) as fh:
                    old = json.load(fh)
                if old.get("seed") != spec.seed:
                    raise KeyCollision(f"{path} was produced with seed {old.get('seed')}; "
                                       "use --force to recompute")
            done = _read_existing(path)
        if not done or args.force:
            with open(path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(experiment.CSV_HEADER)
            done = {}
        with open(sidecar, "w") as fh:
            json.dump(spec_doc, fh, indent=2)
            fh.write("\n")

        wanted = {(c.name, float(b), r, f) for c in spec.configs for b in spec.br_values
                  for r in range(spec.repeats) for f in range(2)}
        missing = len(wanted - set(done))
        log.info("%s: %d cells cached, %d to compute", ds.name, len(wanted) - missing, missing)

        def append(rows):
            with open(path, "a", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                for d, c, br, r, f, a in rows:
                    w.writerow([d, c, repr(float(br)), r, f, repr(a)])

        gr = experiment.run_grid(ds, spec, n_jobs=threads, done=done, on_batch=append)
        gr.to_csv(path)  # canonical order, independent of resume history
        w = experiment.select_winner(gr)
        print(f"{ds.name}: best {w.best_config} br={w.best_br:g} acc={100 * w.mean_accuracy:.3f}%")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    results = [experiment.GridResult.from_csv(p) for p in args.grids]
    reports = []
    for gr in results:
        if not gr.is_complete():
            raise data.DataError(f"{gr.dataset}: grid result is incomplete")
        rep = experiment.select_winner(gr)
        try:
            rep.max_p_value = experiment.significance_analysis(gr, rep)
        except ValueError:
            rep.max_p_value = None
        reports.append(rep)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "winners.csv"), experiment.winners_csv(reports))
    table = experiment.winners_table(reports)
    _write(os.path.join(args.out, "winners.txt"), table)

    brs = results[0].br_values
    overall = experiment.winning_br_histogram(reports, brs)
    per_config = experiment.per_config_histograms(results, brs)
    lines = ["scope," + ",".join(repr(float(b)) for b in brs)]
    lines.append("overall," + ",".join(str(overall.get(b, 0)) for b in brs))
    for name, hist in per_config.items():
        lines.append(f"{name}," + ",".join(str(hist.get(b, 0)) for b in brs))
    _write(os.path.join(args.out, "histogram.csv"), "\n".join(lines) + "\n")

    if not args.no_svg:
        for gr in results:
            _write(os.path.join(args.out, "curves", f"{_stem(gr.dataset)}.svg"),
                   experiment.curves_svg(experiment.br_curves(gr)))
    sys.stdout.write(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# meta


def cmd_meta(args) -> int:
    results = [experiment.GridResult.from_csv(p) for p in (args.grids or [])]
    if args.winners:
        reports = experiment.read_winners_csv(args.winners)
    elif results:
        reports = [experiment.winner_report(gr) for gr in results]
    else:
        raise UsageError("meta needs --grids or --winners")

    labels = meta.regime_labels(reports, args.p_threshold)
    n_gt = sum(lab.value == meta.GT1 for lab in labels)
    n_le = len(labels) - n_gt
    if n_gt == 0 or n_le == 0:
        raise data.DataError("both regimes (BR <= 1 and BR > 1) must be present")
    print(f"labels: {len(labels)} (LE1 {n_le}, GT1 {n_gt}); leave-two-out splits: {n_le * n_gt}")
    if not args.manifests:
        return EXIT_OK

    datasets = {ds.name: ds for ds in (data.load_dataset(m) for m in args.manifests)}
    absent = [lab.dataset for lab in labels if lab.dataset not in datasets]
    if absent:
        raise data.DataError(f"no dataset manifest for: {', '.join(absent)}")
    kls = [meta.dataset_kl(datasets[lab.dataset]) for lab in labels]

    os.makedirs(args.out, exist_ok=True)
    base = meta.build_meta_matrix(kls, class_scaled=True, interactions=False)
    base.to_csv(os.path.join(args.out, "kl.csv"))

    by_name = {r.dataset: r for r in reports}
    targets = {"best": [by_name[lab.dataset].best_br for lab in labels]}
    if results:
        winners = {gr.dataset: experiment.config_winners(gr) for gr in results}
        if all(lab.dataset in winners for lab in labels):
            for cfg in results[0].config_names:
                targets[cfg] = [winners[lab.dataset][cfg] for lab in labels]
    if len(labels) >= 3:
        table = meta.correlation_table(base, targets)
        _write(os.path.join(args.out, "correlations.csv"), meta.correlation_csv(base, table))

    pool = meta.build_meta_matrix(kls, class_scaled=args.pool == "all", interactions=args.pool != "base")
    configs = forest.named_configs()
    if args.configs:
        configs = [forest.config_by_name(n) for n in args.configs]
    brs = args.brs or list(experiment.PAPER_BRS)
    report = meta.meta_evaluate(pool, labels, configs, brs, range(1, args.k_max + 1),
                                seed=_seed(args), n_jobs=_threads(args))
    _write(os.path.join(args.out, "meta_report.csv"), report.to_csv())
    _write(os.path.join(args.out, "meta_summary.txt"), report.summary())
    sys.stdout.write(report.summary())
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit / predict


def cmd_fit(args) -> int:
    ds = data.load_dataset(args.manifest)
    if args.br > BR_WARN:
        log.warning("bootstrap rate %.3g is unusually large; each tree draws %d rows",
                    args.br, forest.bootstrap_size(ds.n_samples, args.br))
    try:
        cfg = forest.config_by_name(args.config_name)
    except KeyError as exc:
        raise UsageError(str(exc))
    cfg = cfg.with_br(args.br).with_seed(_seed(args))
    if args.trees:
        cfg = forest.ForestConfig(args.trees, cfg.tree, cfg.bootstrap_rate, cfg.seed, cfg.name, args.voting)
    elif args.voting != cfg.voting:
        cfg = forest.ForestConfig(cfg.n_trees, cfg.tree, cfg.bootstrap_rate, cfg.seed, cfg.name, args.voting)
    model = forest.fit_forest(ds, cfg, n_jobs=_threads(args))
    _write(args.out, model.to_json())
    acc = float(np.mean(model.predict(ds.features) == ds.labels))
    print(f"{ds.name}: {cfg.name} br={cfg.bootstrap_rate:g} trees={cfg.n_trees} "
          f"resubstitution accuracy {100 * acc:.2f}%")
    return EXIT_OK


def cmd_predict(args) -> int:
    with open(args.model) as fh:
        model = forest.RandomForest.from_json(fh.read())
    ds = data.load_dataset(args.manifest)
    proba = model.predict_proba(ds.features)
    labels = proba.argmax(axis=1)
    lines = ["row,label," + ",".join(f"p{c}" for c in range(model.n_classes))]
    for i, (lab, p) in enumerate(zip(labels, proba)):
        lines.append(f"{i},{lab}," + ",".join(repr(float(v)) for v in p))
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"accuracy {100 * np.mean(labels == ds.labels):.2f}%", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="brforest", description="Random forests with unrestricted bootstrap rate.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("preprocess", help="encode a CSV file into a dataset manifest")
    s.add_argument("input")
    s.add_argument("--target", required=True)
    s.add_argument("--name")
    s.add_argument("--categorical", help="comma-separated columns to force categorical")
    s.add_argument("--delimiter", default=",")
    s.add_argument("--missing", help="comma-separated missing-value markers (default: '', ?, NA)")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--generator", default="hypercube",
                   choices=["hypercube", "waveform", "twonorm", "threenorm", "ringnorm"])
    s.add_argument("--n-samples", type=int, default=300)
    s.add_argument("--n-features", type=int, default=2)
    s.add_argument("--n-classes", type=int, default=2)
    s.add_argument("--clusters-per-class", type=int, default=1)
    s.add_argument("--class-sep", type=float, default=1.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--name")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("grid", help="run the configuration x BR cross-validation grid")
    s.add_argument("manifests", nargs="*")
    s.add_argument("--config", help="JSON run file (datasets, br_values, repeats, seed, configs, output, scale)")
    s.add_argument("--out")
    s.add_argument("--repeats", type=int)
    s.add_argument("--paper-scale", action="store_true", help="200 repeats")
    s.add_argument("--brs", type=float, nargs="+")
    s.add_argument("--configs", nargs="+")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--force", action="store_true", help="discard existing results")
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("report", help="winners, histograms and BR curves from grid results")
    s.add_argument("grids", nargs="+")
    s.add_argument("--out", default=".")
    s.add_argument("--no-svg", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("meta", help="k_l statistics, correlations and the regime classifier")
    s.add_argument("--grids", nargs="*")
    s.add_argument("--winners", help="winners CSV (dataset,best_config,mean_accuracy,best_br,max_p_value)")
    s.add_argument("--manifests", nargs="*")
    s.add_argument("--p-threshold", type=float)
    s.add_argument("--pool", choices=["base", "base+inter", "all"], default="base+inter")
    s.add_argument("--configs", nargs="+")
    s.add_argument("--brs", type=float, nargs="+")
    s.add_argument("--k-max", type=int, default=10)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_meta)

    s = sub.add_parser("fit", help="fit one forest and save it as JSON")
    s.add_argument("manifest")
    s.add_argument("--config-name", default="RF(base)")
    s.add_argument("--br", type=float, default=1.0)
    s.add_argument("--trees", type=int)
    s.add_argument("--voting", choices=["soft", "hard"], default="soft")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="predict with a saved forest")
    s.add_argument("model")
    s.add_argument("manifest")
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"brforest: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (data.DataError, FileNotFoundError, ValueError) as exc:
        print(f"brforest: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
