"""Repeated stratified 2-fold CV over configurations x bootstrap rates.

Within one repeat the fold assignment and the forest seed are shared by
every (configuration, BR) cell, so accuracy vectors of different cells are
paired position by position on ``(repeat, fold)``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, stratified_two_fold
from .forest import ForestConfig, fit_arrays, named_configs
from .stats import paired_t_greater

PAPER_BRS = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 2.0, 3.0, 4.0, 5.0)
DESK_REPEATS = 20
PAPER_REPEATS = 200

CSV_HEADER = ("dataset", "config", "br", "repeat", "fold", "accuracy")


@dataclass
class GridSpec:
    configs: list[ForestConfig] = field(default_factory=named_configs)
    br_values: tuple = PAPER_BRS
    repeats: int = DESK_REPEATS
    seed: int = 0

    def __post_init__(self):
        brs = list(self.br_values)
        if not brs or any(b <= 0 for b in brs) or any(b2 <= b1 for b1, b2 in zip(brs, brs[1:])):
            raise ValueError("br_values must be positive and strictly increasing")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        names = [c.name for c in self.configs]
        if len(set(names)) != len(names):
            raise ValueError("configuration names must be unique")


def cell_seed(seed: int, repeat: int, fold: int) -> int:
    """Forest seed shared by all cells evaluated on one (repeat, fold) split."""
    return int(np.random.SeedSequence([seed, repeat, fold]).generate_state(1, np.uint32)[0])


@dataclass
class GridResult:
    """Accuracies indexed ``[config, br, repeat, fold]``; NaN marks an empty cell."""

    dataset: str
    config_names: list[str]
    br_values: list[float]
    accuracies: np.ndarray

    @property
    def repeats(self) -> int:
        return self.accuracies.shape[2]

    def cells(self, config: str, br: float) -> np.ndarray:
        """The 2*repeats fold accuracies of one cell, ordered by (repeat, fold)."""
        i = self.config_names.index(config)
        j = self._br_index(br)
        return self.accuracies[i, j].reshape(-1)

    def _br_index(self, br):
        for j, b in enumerate(self.br_values):
            if math.isclose(b, br, rel_tol=0, abs_tol=1e-9):
                return j
        raise KeyError(f"br {br} not in grid")

    def mean_table(self) -> np.ndarray:
        return self.accuracies.reshape(*self.accuracies.shape[:2], -1).mean(axis=2)

    def is_complete(self) -> bool:
        return not np.isnan(self.accuracies).any()

    def rows(self):
        for i, name in enumerate(self.config_names):
            for j, br in enumerate(self.br_values):
                for r in range(self.repeats):
                    for f in range(2):
                        acc = self.accuracies[i, j, r, f]
                        if not np.isnan(acc):
                            yield self.dataset, name, br, r, f, float(acc)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for d, c, br, r, f, acc in self.rows():
            w.writerow([d, c, repr(float(br)), r, f, repr(acc)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_rows(cls, rows, config_order=None, br_values=None) -> GridResult:
        rows = list(rows)
        if not rows:
            raise ValueError("no grid rows")
        datasets = {r[0] for r in rows}
        if len(datasets) != 1:
            raise ValueError(f"rows mix several datasets: {sorted(datasets)}")
        names = list(config_order) if config_order else list(dict.fromkeys(r[1] for r in rows))
        brs = sorted(br_values if br_values else {float(r[2]) for r in rows})
        repeats = max(int(r[3]) for r in rows) + 1
        acc = np.full((len(names), len(brs), repeats, 2), np.nan)
        for d, c, br, r, f, a in rows:
            j = min(range(len(brs)), key=lambda k: abs(brs[k] - float(br)))
            acc[names.index(c), j, int(r), int(f)] = float(a)
        return cls(datasets.pop(), names, brs, acc)

    @classmethod
    def from_csv(cls, path) -> GridResult:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [(d, c, float(br), int(r), int(f), float(a)) for d, c, br, r, f, a in reader]
        return cls.from_rows(rows)


def _accuracy(model, X, y) -> float:
    return float(np.mean(model.predict(X) == y))


def run_grid(ds: Dataset, spec: GridSpec, n_jobs: int = 1, done=None, on_batch=None) -> GridResult:
    """Evaluate every (configuration, BR) cell with repeated stratified 2-fold CV.

    ``done`` maps already computed keys ``(config, br, repeat, fold)`` to
    accuracies; those cells are not refit.  ``on_batch`` receives the newly
    computed rows of each (repeat, fold) split, in canonical order, as soon
    as the split finishes.
    """
    done = done or {}
    names = [c.name for c in spec.configs]
    brs = list(spec.br_values)
    acc = np.full((len(names), len(brs), spec.repeats, 2), np.nan)
    pool = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None
    try:
        for r in range(spec.repeats):
            folds = stratified_two_fold(ds, r, spec.seed)
            for f in range(2):
                train, test = folds.split(f)
                X = np.ascontiguousarray(ds.features[train])
                Xt = np.ascontiguousarray(X.T)
                y = ds.labels[train]
                Xtest, ytest = ds.features[test], ds.labels[test]
                seed = cell_seed(spec.seed, r, f)

                todo = []
                for i, cfg in enumerate(spec.configs):
                    for j, br in enumerate(brs):
                        key = (cfg.name, br, r, f)
                        if key in done:
                            acc[i, j, r, f] = done[key]
                        else:
                            todo.append((i, j, cfg.with_br(br).with_seed(seed)))

                def evaluate(item):
                    i, j, cfg = item
                    model = fit_arrays(X, y, ds.n_classes, cfg, Xt=Xt)
                    return _accuracy(model, Xtest, ytest)

                results = list(pool.map(evaluate, todo)) if pool else [evaluate(t) for t in todo]
                new_rows = []
                for (i, j, _), a in zip(todo, results):
                    acc[i, j, r, f] = a
                    new_rows.append((ds.name, names[i], brs[j], r, f, a))
                if on_batch is not None and new_rows:
                    on_batch(new_rows)
    finally:
        if pool is not None:
            pool.shutdown()
    return GridResult(ds.name, names, brs, acc)


# ---------------------------------------------------------------------------
# reports


@dataclass
class WinnerReport:
    dataset: str
    best_config: str
    best_br: float
    mean_accuracy: float
    max_p_value: float | None = None

    @property
    def regime(self) -> str:
        return "GT1" if self.best_br > 1 else "LE1"


def select_winner(gr: GridResult) -> WinnerReport:
    """Cell with the highest mean accuracy; ties go to the lower BR, then the earlier config."""
    means = gr.mean_table()
    best = None
    for j in range(len(gr.br_values)):
        for i in range(len(gr.config_names)):
            m = means[i, j]
            if np.isnan(m):
                continue
            if best is None or m > best[0]:
                best = (m, i, j)
    if best is None:
        raise ValueError("grid has no evaluated cells")
    m, i, j = best
    return WinnerReport(gr.dataset, gr.config_names[i], gr.br_values[j], float(m))


def significance_analysis(gr: GridResult, winner: WinnerReport) -> float:
    """Maximum p-value of the winner against every cell in the opposite BR group."""
    winner_cells = gr.cells(winner.best_config, winner.best_br)
    low = winner.best_br <= 1
    opposite = [b for b in gr.br_values if (b > 1) == low]
    if not opposite:
        raise ValueError("grid has no BR values on the other side of 1")
    p_max = 0.0
    for name in gr.config_names:
        for br in opposite:
            p = paired_t_greater(winner_cells, gr.cells(name, br)).p_value
            p_max = max(p_max, p)
    return p_max


def winner_report(gr: GridResult) -> WinnerReport:
    w = select_winner(gr)
    w.max_p_value = significance_analysis(gr, w)
    return w


def config_winners(gr: GridResult) -> dict[str, float]:
    """Best BR for each configuration taken on its own (lowest BR on ties)."""
    means = gr.mean_table()
    return {name: gr.br_values[int(np.argmax(means[i]))] for i, name in enumerate(gr.config_names)}


@dataclass
class BRCurve:
    dataset: str
    config: str
    points: list[tuple[float, float]]


def br_curves(gr: GridResult) -> list[BRCurve]:
    means = gr.mean_table()
    return [BRCurve(gr.dataset, name, [(br, float(means[i, j])) for j, br in enumerate(gr.br_values)])
            for i, name in enumerate(gr.config_names)]


def winning_br_histogram(reports, br_values=None, config=None) -> dict[float, int]:
    """Count how often each BR won.

    With ``config`` set, only reports whose winning configuration has that
    name are counted.  ``br_values`` zero-fills BRs that never won.
    """
    if not reports:
        raise ValueError("need at least one report")
    counts = {b: 0 for b in (br_values or [])}
    for rep in reports:
        if config is not None and rep.best_config != config:
            continue
        counts[rep.best_br] = counts.get(rep.best_br, 0) + 1
    return dict(sorted(counts.items()))


def per_config_histograms(results, br_values=None) -> dict[str, dict[float, int]]:
    """For each configuration, how often each BR was that configuration's own best."""
    out = {}
    for gr in results:
        for name, br in config_winners(gr).items():
            hist = out.setdefault(name, {b: 0 for b in (br_values or gr.br_values)})
            hist[br] = hist.get(br, 0) + 1
    return out


def format_p(p) -> str:
    if p is None:
        return "-"
    return "< 1e-6" if p < 1e-6 else f"{p:.6f}"


def winners_table(reports) -> str:
    lines = [f"{'Dataset':<32}{'Best model':<14}{'Acc. [%]':>10}{'BR':>6}{'p-value':>12}"]
    for r in reports:
        lines.append(f"{r.dataset:<32}{r.best_config:<14}{100 * r.mean_accuracy:>10.3f}"
                     f"{r.best_br:>6g}{format_p(r.max_p_value):>12}")
    return "\n".join(lines) + "\n"


def winners_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "best_config", "mean_accuracy", "best_br", "max_p_value"])
    for r in reports:
        w.writerow([r.dataset, r.best_config, repr(r.mean_accuracy), repr(float(r.best_br)),
                    "" if r.max_p_value is None else repr(r.max_p_value)])
    return buf.getvalue()


def read_winners_csv(path) -> list[WinnerReport]:
    """Read a winners table; p-values written as ``< 1e-6`` parse to 1e-6."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            p = row.get("max_p_value", "").strip()
            if not p:
                pv = None
            elif p.startswith("<"):
                pv = float(p[1:])
            else:
                pv = float(p)
            out.append(WinnerReport(row["dataset"], row["best_config"], float(row["best_br"]),
                                    float(row["mean_accuracy"]), pv))
    return out


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf")


def curves_svg(curves: list[BRCurve], width=640, height=420) -> str:
    """Standalone SVG line chart, one polyline per configuration."""
    left, right, top, bottom = 60, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    brs = [b for b, _ in curves[0].points]
    accs = [100 * a for c in curves for _, a in c.points]
    lo, hi = min(accs), max(accs)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    xs = {b: left + pw * k / max(1, len(brs) - 1) for k, b in enumerate(brs)}

    def ypos(a):
        return top + ph * (1 - (100 * a - lo) / (hi - lo))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<title>{curves[0].dataset}</title>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for b, x in xs.items():
        out.append(f'<text x="{x:.1f}" y="{top + ph + 16}" text-anchor="middle">{b:g}</text>')
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        y = top + ph * (1 - k / 4)
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.1f}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">br</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">accuracy%</text>')
    for n, c in enumerate(curves):
        color = _PALETTE[n % len(_PALETTE)]
        pts = " ".join(f"{xs[b]:.1f},{ypos(a):.1f}" for b, a in c.points)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}">'
                   f'<title>{c.config}</title></polyline>')
        ly = top + 12 + 14 * n
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 28}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly}">{c.config}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
