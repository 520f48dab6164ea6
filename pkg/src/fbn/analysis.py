"""Mean heatmaps, per-edge Welch t-tests and module difference scores over generated graphs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import CohortFormatError, ModulePartition, read_matrix
from .numerics import t_two_sided_p

THRESHOLD = 0.05


def _stack(graphs) -> np.ndarray:
    g = np.asarray(graphs, dtype=np.float64)
    if g.ndim != 3 or g.shape[0] == 0:
        raise ValueError("need a nonempty stack of v x v graphs")
    if g.shape[1] != g.shape[2]:
        raise ValueError(f"graphs must be square, got {g.shape[1:]}")
    return g


def heatmap_order(partition: ModulePartition) -> np.ndarray:
    """Assigned ROIs grouped by module, ROI index ascending within a module."""
    return partition.assigned()


def mean_heatmap(graphs, partition: ModulePartition, labels=None, scope="all") -> np.ndarray:
    """Entrywise mean restricted to assigned ROIs; ``scope`` is ``"all"`` or a class index."""
    g = _stack(graphs)
    if g.shape[1] != partition.v:
        raise ValueError(f"graphs have {g.shape[1]} ROIs, partition has {partition.v}")
    if scope != "all":
        if labels is None:
            raise ValueError("a per-class heatmap needs labels")
        g = g[np.asarray(labels) == scope]
        if g.shape[0] == 0:
            raise ValueError(f"no graphs of class {scope}")
    order = heatmap_order(partition)
    return g.mean(axis=0)[np.ix_(order, order)]


@dataclass
class EdgeSignificance:
    tstats: np.ndarray
    pvalues: np.ndarray
    edges: list[tuple[int, int]]  # p < q with pvalue below threshold
    threshold: float = THRESHOLD
    correction: str = "none"


def edge_ttest(
    graphs_a,
    graphs_b,
    threshold: float = THRESHOLD,
    bonferroni: bool = False,
    exclude=(),
) -> EdgeSignificance:
    """Welch two-sample t-test on every upper-triangle edge.

    ROIs in ``exclude`` still get statistics but never enter the significant set.
    With ``bonferroni`` the threshold is divided by the number of tested edges.
    """
    a, b = _stack(graphs_a), _stack(graphs_b)
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"groups disagree on graph shape: {a.shape[1:]} vs {b.shape[1:]}")
    na, nb = a.shape[0], b.shape[0]
    if na < 2 or nb < 2:
        raise ValueError("each group needs at least two graphs")
    v = a.shape[1]
    iu = np.triu_indices(v, 1)
    xa, xb = a[:, iu[0], iu[1]], b[:, iu[0], iu[1]]
    va, vb = xa.var(axis=0, ddof=1) / na, xb.var(axis=0, ddof=1) / nb
    diff = xa.mean(axis=0) - xb.mean(axis=0)
    se2 = va + vb
    t = np.zeros_like(diff)
    p = np.ones_like(diff)
    for e in range(diff.size):
        if se2[e] == 0.0:
            if diff[e] != 0.0:  # constant groups at different values: separated without doubt
                t[e], p[e] = np.copysign(np.inf, diff[e]), 0.0
            continue
        t[e] = diff[e] / np.sqrt(se2[e])
        dof = se2[e] ** 2 / (va[e] ** 2 / (na - 1) + vb[e] ** 2 / (nb - 1))
        p[e] = t_two_sided_p(t[e], dof)
    tm, pm = np.zeros((v, v)), np.ones((v, v))
    tm[iu], pm[iu] = t, p
    tm[(iu[1], iu[0])], pm[(iu[1], iu[0])] = t, p
    level = threshold / diff.size if bonferroni else threshold
    skip = set(int(r) for r in exclude)
    edges = [
        (int(i), int(j))
        for i, j, pv in zip(iu[0], iu[1], p)
        if pv < level and int(i) not in skip and int(j) not in skip
    ]
    return EdgeSignificance(tm, pm, edges, level, "bonferroni" if bonferroni else "none")


@dataclass
class ModuleScore:
    module: str
    size: int
    score: float
    rank: int = 0


def module_difference_scores(sig: EdgeSignificance, partition: ModulePartition) -> list[ModuleScore]:
    """T_u = sum over significant edges (p, q) of ([p in M_u] + [q in M_u]) / |M_u|, sorted descending.

    Edges touching an unassigned ROI are skipped. Ties keep module order.
    """
    sizes = [partition.members(u).size for u in range(len(partition.names))]
    if any(s == 0 for s in sizes):
        raise ValueError("partition has an empty module")
    counts = np.zeros(len(sizes))
    assignment = partition.assignment
    for p, q in sig.edges:
        mp, mq = assignment[p], assignment[q]
        if mp < 0 or mq < 0:
            continue
        counts[mp] += 1
        counts[mq] += 1
    scores = [ModuleScore(partition.names[u], sizes[u], counts[u] / sizes[u]) for u in range(len(sizes))]
    ranked = sorted(scores, key=lambda s: -s.score)
    for r, s in enumerate(ranked, 1):
        s.rank = r
    return ranked


# ---------------------------------------------------------------------------
# analysis of an exported graph directory
# ---------------------------------------------------------------------------


@dataclass
class GraphSet:
    graphs: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    partition: ModulePartition


def load_graph_set(directory: str | Path) -> GraphSet:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.exists():
        raise CohortFormatError(f"missing file: {mpath}")
    try:
        meta = json.loads(mpath.read_text())
        n = int(meta["n"])
        partition = ModulePartition(tuple(meta["assignment"]), tuple(meta["module_names"]))
        class_names = tuple(meta["class_names"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CohortFormatError(f"{mpath}: malformed manifest ({exc})") from None
    lpath = directory / "labels.csv"
    if not lpath.exists():
        raise CohortFormatError(f"missing file: {lpath}")
    with open(lpath, newline="") as fh:
        try:
            labels = {int(r["sample_id"]): int(r["label"]) for r in csv.DictReader(fh)}
        except (KeyError, TypeError, ValueError):
            raise CohortFormatError(f"{lpath}: malformed rows") from None
    if sorted(labels) != list(range(n)):
        raise CohortFormatError(f"{lpath}: expected sample ids 0..{n - 1}")
    graphs = np.stack([read_matrix(directory / f"sample_{i}.csv") for i in range(n)])
    if graphs.shape[1:] != (partition.v, partition.v):
        raise CohortFormatError(f"{directory}: graphs of shape {graphs.shape[1:]} but {partition.v} ROIs")
    return GraphSet(graphs, np.array([labels[i] for i in range(n)]), class_names, partition)


def _roi_labels(partition: ModulePartition, rois) -> list[str]:
    return [f"roi{r}" for r in rois]


def _module_labels(partition: ModulePartition, rois) -> list[str]:
    return [partition.names[partition.assignment[r]] if partition.assignment[r] >= 0 else "UNASSIGNED" for r in rois]


def write_labeled_matrix(path: Path, m: np.ndarray, partition: ModulePartition, rois) -> None:
    """Matrix CSV with two header rows (module, ROI) and the same two leading columns."""
    mods, names = _module_labels(partition, rois), _roi_labels(partition, rois)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["module", ""] + mods)
        w.writerow(["", "roi"] + names)
        for mod, name, row in zip(mods, names, m):
            w.writerow([mod, name] + [repr(float(x)) for x in row])


def analyze_graphs(gs: GraphSet, out: str | Path, bonferroni: bool = False, threshold: float = THRESHOLD) -> dict:
    """Write heatmaps, t statistics, p-values and module scores for a two-class graph set."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    part = gs.partition
    order = heatmap_order(part)
    write_labeled_matrix(out / "heatmap_all.csv", mean_heatmap(gs.graphs, part), part, order)
    for c, name in enumerate(gs.class_names):
        if np.any(gs.labels == c):
            m = mean_heatmap(gs.graphs, part, gs.labels, scope=c)
            write_labeled_matrix(out / f"heatmap_class_{name}.csv", m, part, order)
    if len(gs.class_names) != 2:
        raise ValueError("edge tests compare exactly two classes")
    unassigned = [r for r in range(part.v) if part.assignment[r] < 0]
    sig = edge_ttest(
        gs.graphs[gs.labels == 0], gs.graphs[gs.labels == 1], threshold, bonferroni, exclude=unassigned
    )
    rois = np.arange(part.v)
    write_labeled_matrix(out / "tstats.csv", sig.tstats, part, rois)
    write_labeled_matrix(out / "pvalues.csv", sig.pvalues, part, rois)
    scores = module_difference_scores(sig, part)
    with open(out / "module_scores.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["module", "size", "T_u", "rank"])
        for s in scores:
            w.writerow([s.module, s.size, repr(float(s.score)), s.rank])
    meta = {
        "test": "welch two-sample t, two-sided",
        "threshold": threshold,
        "correction": sig.correction,
        "effective_threshold": sig.threshold,
        "significant_edges": len(sig.edges),
        "excluded_rois": unassigned,
        "top3": [s.module for s in scores[:3]],
    }
    (out / "analysis.json").write_text(json.dumps(meta, indent=2) + "\n")
    return meta
