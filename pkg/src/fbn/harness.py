"""Training loop, AUROC, cross-validation, ablations and graph-source comparisons."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dataset import Cohort, node_features, pearson_matrix, stratified_kfold, uniform_graph, write_matrix
from .graphgen import LossWeights
from .model import GraphModel, TimeSeriesModel
from .numerics import Adam, NonFiniteError, Prng, Tensor, cross_entropy_logits, derive_seed, softmax_rows
from .predictor import LossBreakdown, total_loss

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("rep", "fold", "epoch", "L_ce", "L_inner", "L_intra", "L_sparsity", "total", "test_auroc")
LOSS_KEYS = ("L_ce", "L_inner", "L_intra", "L_sparsity", "total")
ABLATION_VARIANTS = {"CE": "ce", "CE+GL": "ce+gl", "CE+SL": "ce+sl", "FULL": "full"}


class NumericalFailure(RuntimeError):
    pass


class FoldInfeasible(ValueError):
    pass


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """P(score of a positive > score of a negative) + 1/2 P(tie), via the rank-sum statistic."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores but {labels.size} labels")
    if not set(np.unique(labels).tolist()) <= {0, 1}:
        raise ValueError("auroc needs binary labels in {0, 1}")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc needs both classes present")
    if not np.all(np.isfinite(scores)):
        raise ValueError("auroc scores must be finite")
    rank_sum = _average_ranks(scores)[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: GraphModel | TimeSeriesModel
    history: list[dict]  # one dict per epoch: loss means and test_auroc


def cohort_inputs(cohort: Cohort, cfg: RunConfig) -> tuple[np.ndarray, np.ndarray | None]:
    """Node features for every sample and, for fixed graph sources, the fixed graphs."""
    X = cohort.X
    F = np.stack([node_features(x, cfg.data.node_feature_mode) for x in X])
    source = cfg.graph.source
    if cfg.train.model != "graph" or source == "learnable":
        fixed = None
    elif source == "pearson":
        fixed = np.stack([pearson_matrix(x) for x in X])
    else:
        fixed = np.broadcast_to(uniform_graph(cohort.v), (cohort.n, cohort.v, cohort.v)).copy()
    return F, fixed


def build_model(cohort: Cohort, cfg: RunConfig, rng: Prng):
    n_classes = len(cohort.class_names)
    if cfg.train.model == "timeseries":
        return TimeSeriesModel(cohort.v, cohort.t, n_classes, cfg.encoder, rng)
    f = cohort.v  # both node feature modes give v features per ROI
    return GraphModel(cohort.v, cohort.t, f, n_classes, cfg.encoder, cfg.predictor, cfg.graph.source, rng)


def minibatches(order: np.ndarray, size: int) -> list[np.ndarray]:
    """Consecutive chunks; a trailing chunk of one sample joins the previous one (batchnorm needs two)."""
    chunks = [order[i : i + size] for i in range(0, len(order), size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    return chunks


def _breakdown(logits: Tensor, A, labels, weights: LossWeights) -> LossBreakdown:
    if A is None:  # time-series baseline: cross-entropy only
        ce, zero = cross_entropy_logits(logits, labels), Tensor(0.0)
        return LossBreakdown(ce, zero, zero, zero, ce, weights)
    return total_loss(logits, labels, A, weights)


def predict_scores(model, X, F, fixed=None) -> np.ndarray:
    """Eval-mode softmax probability of class 1 per sample."""
    logits, _ = model(X, F, fixed, mode="eval")
    return softmax_rows(logits).data[:, 1]


def train_model(
    cohort: Cohort,
    train_idx,
    cfg: RunConfig,
    seed: int,
    test_idx=None,
    inputs=None,
) -> TrainResult:
    """Fit one model on ``train_idx``; if ``test_idx`` is given, score it after every epoch."""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    labels = cohort.labels
    if train_idx.size < 2 or len(np.unique(labels[train_idx])) < 2:
        raise FoldInfeasible("training set needs at least two samples covering both classes")
    F, fixed = inputs if inputs is not None else cohort_inputs(cohort, cfg)
    X = cohort.X
    model = build_model(cohort, cfg, Prng(derive_seed(seed, 0)))
    opt = Adam(model.trainable_parameters(), lr=cfg.train.lr, weight_decay=cfg.train.weight_decay)
    weights = cfg.loss.effective()
    shuffle = Prng(derive_seed(seed, 1))
    evaluate = test_idx is not None and len(np.unique(labels[test_idx])) == 2
    history = []
    with np.errstate(over="ignore", invalid="ignore"):  # finiteness is checked per batch below
        for epoch in range(cfg.train.epochs):
            history.append(_epoch(model, opt, X, F, fixed, labels, train_idx, test_idx if evaluate else None,
                                  cfg, weights, shuffle, epoch))
    return TrainResult(model, history)


def _epoch(model, opt, X, F, fixed, labels, train_idx, test_idx, cfg, weights, shuffle, epoch) -> dict:
    """One pass over shuffled mini-batches; returns the epoch's mean losses and test AUROC."""
    sums = dict.fromkeys(LOSS_KEYS, 0.0)
    batches = minibatches(train_idx[shuffle.permutation(train_idx.size)], cfg.train.batch_size)
    for b, idx in enumerate(batches):
        opt.zero_grad()
        try:
            logits, A = model(X[idx], F[idx], None if fixed is None else fixed[idx], mode="train")
            parts = _breakdown(logits, A, labels[idx], weights)
            if not np.isfinite(parts.total.item()):
                raise NonFiniteError("loss is not finite")
            parts.total.backward()
            for p in opt.params:
                if not np.all(np.isfinite(p.grad)):
                    raise NonFiniteError("gradient is not finite")
        except NonFiniteError as exc:
            raise NumericalFailure(f"epoch {epoch} batch {b}: {exc}") from None
        opt.step()
        for key, value in parts.as_dict().items():
            sums[key] += value
    row = {key: sums[key] / len(batches) for key in LOSS_KEYS}
    if test_idx is not None:
        t_fixed = None if fixed is None else fixed[test_idx]
        row["test_auroc"] = auroc(predict_scores(model, X[test_idx], F[test_idx], t_fixed), labels[test_idx])
    else:
        row["test_auroc"] = float("nan")
    log.debug("epoch %d %s", epoch, row)
    return row


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


@dataclass
class FoldRecord:
    rep: int
    fold: int
    test_idx: np.ndarray
    history: list[dict]
    graphs: np.ndarray | None  # test-sample graphs of the final model

    @property
    def final_auroc(self) -> float:
        return self.history[-1]["test_auroc"]


@dataclass
class RunRecord:
    name: str
    config: RunConfig
    weights: LossWeights
    folds: list[FoldRecord]
    graphs: np.ndarray | None = None  # (n, v, v) for the exported cohort graphs
    labels: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def aurocs(self) -> np.ndarray:
        return np.array([f.final_auroc for f in self.folds])

    @property
    def mean_auroc(self) -> float:
        return float(np.mean(self.aurocs))

    @property
    def std_auroc(self) -> float:
        a = self.aurocs
        return float(np.std(a, ddof=1)) if a.size > 1 else 0.0

    def metric_rows(self) -> list[list[str]]:
        rows = []
        for f in sorted(self.folds, key=lambda r: (r.rep, r.fold)):
            for epoch, h in enumerate(f.history):
                rows.append([str(f.rep), str(f.fold), str(epoch)] + [repr(float(h[k])) for k in METRIC_COLUMNS[3:]])
        return rows

    def summary(self) -> dict:
        return {
            "mean_auroc": self.mean_auroc,
            "std_auroc": self.std_auroc,
            "runs": len(self.folds),
            "weights": dataclasses.asdict(self.weights),
            "graph_source": self.config.graph.source,
            "loss_variant": self.config.loss.variant,
            "model": self.config.train.model,
            "encoder": self.config.encoder.variant,
        }


def _final_graphs(model, cohort_X, idx, fixed) -> np.ndarray | None:
    if not isinstance(model, GraphModel):
        return None
    if fixed is not None:
        return fixed[idx]
    return model.graphs(cohort_X[idx]).data


def _run_fold(job) -> FoldRecord:
    cohort, cfg, rep, fold, train_idx, test_idx, inputs = job
    seed = derive_seed(cfg.seed, 1, rep, fold)
    result = train_model(cohort, train_idx, cfg, seed, test_idx=test_idx, inputs=inputs)
    graphs = _final_graphs(result.model, cohort.X, test_idx, inputs[1])
    return FoldRecord(rep, fold, np.asarray(test_idx), result.history, graphs)


def fold_splits(cohort: Cohort, cfg: RunConfig):
    try:
        return stratified_kfold(cohort.labels, cfg.cv.folds, cfg.cv.repetitions, seed=derive_seed(cfg.seed, 0))
    except ValueError as exc:
        raise FoldInfeasible(str(exc)) from None


def cross_validate(cohort: Cohort, cfg: RunConfig, jobs: int = 1, name: str = "run") -> RunRecord:
    """k-fold x repetitions fold-runs with seeds derived from (seed, rep, fold).

    Exported graphs come from a final fit on the whole cohort when
    ``cv.final_fit`` is set, otherwise from the repetition-0 fold models
    applied to their own test samples.
    """
    splits = fold_splits(cohort, cfg)
    inputs = cohort_inputs(cohort, cfg)
    k = cfg.cv.folds
    jobs_list = [(cohort, cfg, i // k, i % k, tr, te, inputs) for i, (tr, te) in enumerate(splits)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(_run_fold, jobs_list))
    else:
        folds = []
        for job in jobs_list:
            folds.append(_run_fold(job))
            log.info("%s rep %d fold %d auroc %.4f", name, folds[-1].rep, folds[-1].fold, folds[-1].final_auroc)
    record = RunRecord(name, cfg, cfg.loss.effective(), folds, labels=cohort.labels)
    if cfg.train.model == "graph":
        if cfg.cv.final_fit:
            record.graphs = final_fit_graphs(cohort, cfg, inputs)
        else:
            graphs = np.empty((cohort.n, cohort.v, cohort.v))
            for f in folds:
                if f.rep == 0:
                    graphs[f.test_idx] = f.graphs
            record.graphs = graphs
    return record


def final_fit_graphs(cohort: Cohort, cfg: RunConfig, inputs=None) -> np.ndarray:
    """Graphs of every sample under a model trained on the whole cohort."""
    inputs = inputs if inputs is not None else cohort_inputs(cohort, cfg)
    if inputs[1] is not None:
        return inputs[1]
    result = train_model(cohort, np.arange(cohort.n), cfg, derive_seed(cfg.seed, 2), inputs=inputs)
    return _final_graphs(result.model, cohort.X, np.arange(cohort.n), None)


def _variant(cfg: RunConfig, **overrides) -> RunConfig:
    return cfg.with_overrides(overrides)


def run_ablation(cohort: Cohort, cfg: RunConfig, jobs: int = 1) -> dict[str, RunRecord]:
    """CE, CE+GL, CE+SL and FULL with identical folds and fold seeds."""
    return {
        name: cross_validate(cohort, _variant(cfg, **{"loss.variant": variant}), jobs, name)
        for name, variant in ABLATION_VARIANTS.items()
    }


def run_graph_comparison(cohort: Cohort, cfg: RunConfig, jobs: int = 1) -> dict[str, RunRecord]:
    """Learnable, Pearson and uniform graphs under the same features, predictor, folds and seeds."""
    return {
        source: cross_validate(cohort, _variant(cfg, **{"graph.source": source, "train.model": "graph"}), jobs, source)
        for source in ("learnable", "pearson", "uniform")
    }


def run_timeseries_baselines(cohort: Cohort, cfg: RunConfig, jobs: int = 1) -> dict[str, RunRecord]:
    """Encoder + MLP without any graph, for both encoder variants."""
    return {
        f"timeseries-{v}": cross_validate(
            cohort, _variant(cfg, **{"train.model": "timeseries", "encoder.variant": v}), jobs, f"timeseries-{v}"
        )
        for v in ("cnn", "gru")
    }


# ---------------------------------------------------------------------------
# run directories
# ---------------------------------------------------------------------------


def write_config_echo(cfg: RunConfig, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    path.write_text(cfg.to_json())
    return path


def write_metrics(record: RunRecord, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        writer.writerows(record.metric_rows())


def write_graphs(record: RunRecord, cohort: Cohort, directory: str | Path) -> None:
    """One v x v CSV per sample plus the labels and module partition needed for analysis."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, g in enumerate(record.graphs):
        write_matrix(directory / f"sample_{i}.csv", g)
    with open(directory / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "label"])
        writer.writerows([i, int(c)] for i, c in enumerate(cohort.labels))
    meta = {
        "n": cohort.n,
        "v": cohort.v,
        "class_names": list(cohort.class_names),
        "module_names": list(cohort.partition.names),
        "assignment": list(cohort.partition.assignment),
        "source": "final fit on full cohort" if record.config.cv.final_fit else "rep-0 out-of-fold models",
    }
    (directory / "manifest.json").write_text(json.dumps(meta, indent=2) + "\n")


def write_run_dir(record: RunRecord, cohort: Cohort, out: str | Path) -> None:
    out = Path(out)
    write_config_echo(record.config, out)
    write_metrics(record, out / "metrics.csv")
    if record.graphs is not None:
        write_graphs(record, cohort, out / "graphs")
    (out / "summary.json").write_text(json.dumps({record.name: record.summary()}, indent=2) + "\n")


def write_comparison(records: dict[str, RunRecord], cohort: Cohort, out: str | Path) -> None:
    """One sub-directory per variant plus a combined summary.json and comparison table."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name, record in records.items():
        write_run_dir(record, cohort, out / _dirname(name))
    summary = {name: r.summary() for name, r in records.items()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "mean_auroc", "std_auroc", "alpha", "beta", "gamma"])
        for name, r in records.items():
            w = r.weights
            writer.writerow([name, repr(r.mean_auroc), repr(r.std_auroc), repr(w.alpha), repr(w.beta), repr(w.gamma)])


def _dirname(name: str) -> str:
    return name.lower().replace("+", "_")
