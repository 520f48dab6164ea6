"""Cohorts of ROI time series: synthetic generation, persistence, node features and splits."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics import DEFAULT_SEED, Prng, derive_seed

UNASSIGNED = -1


class CohortFormatError(ValueError):
    """A cohort directory is missing files or holds inconsistent contents."""


class ZeroVarianceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class BoldSample:
    x: np.ndarray  # (v, t)
    label: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2 or min(x.shape) < 2:
            raise ValueError(f"a sample needs a v x t matrix with v, t >= 2, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class ModulePartition:
    """ROI -> module index (``UNASSIGNED`` for ROIs outside every module)."""

    assignment: tuple[int, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))
        object.__setattr__(self, "names", tuple(self.names))
        for u, name in enumerate(self.names):
            if u not in self.assignment:
                raise ValueError(f"module {name!r} has no ROIs")
        bad = [a for a in self.assignment if a != UNASSIGNED and not 0 <= a < len(self.names)]
        if bad:
            raise ValueError(f"assignment refers to unknown modules {sorted(set(bad))}")

    @classmethod
    def from_sizes(cls, v: int, sizes, names=None) -> "ModulePartition":
        sizes = list(sizes)
        if sum(sizes) > v:
            raise ValueError(f"module sizes {sizes} exceed {v} ROIs")
        names = tuple(names) if names else tuple(f"M{u}" for u in range(len(sizes)))
        assignment = []
        for u, size in enumerate(sizes):
            assignment += [u] * size
        assignment += [UNASSIGNED] * (v - len(assignment))
        return cls(tuple(assignment), names)

    @property
    def v(self) -> int:
        return len(self.assignment)

    def members(self, u: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignment) == u)

    def assigned(self) -> np.ndarray:
        """Assigned ROI indices ordered by module, then by ROI index."""
        order = [self.members(u) for u in range(len(self.names))]
        return np.concatenate(order) if order else np.zeros(0, dtype=int)

    def module_of(self, roi: int) -> int:
        return self.assignment[roi]


@dataclass
class Cohort:
    samples: list[BoldSample]
    class_names: tuple[str, ...]
    partition: ModulePartition
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.samples:
            raise ValueError("a cohort needs at least one sample")
        shape = self.samples[0].x.shape
        for i, s in enumerate(self.samples):
            if s.x.shape != shape:
                raise ValueError(f"sample {i} has shape {s.x.shape}, expected {shape}")
            if not 0 <= s.label < len(self.class_names):
                raise ValueError(f"sample {i} label {s.label} outside class set")
        if self.partition.v != shape[0]:
            raise ValueError(f"partition covers {self.partition.v} ROIs but samples have {shape[0]}")

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def v(self) -> int:
        return self.samples[0].x.shape[0]

    @property
    def t(self) -> int:
        return self.samples[0].x.shape[1]

    @property
    def X(self) -> np.ndarray:
        return np.stack([s.x for s in self.samples])

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return (
            self.class_names == other.class_names
            and self.partition == other.partition
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.X, other.X)
        )


# ---------------------------------------------------------------------------
# synthetic cohorts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantedBlock:
    """Correlation added on edges between ``module_a`` and ``module_b``, one delta per class."""

    module_a: int
    module_b: int
    deltas: tuple[float, ...]


def _default_planted() -> tuple[PlantedBlock, ...]:
    # module 0 differs between classes; module 1 is strongly coupled in both
    return (PlantedBlock(0, 0, (0.0, 0.4)), PlantedBlock(1, 1, (0.4, 0.4)))


@dataclass
class SyntheticConfig:
    n: int = 200
    v: int = 16
    t: int = 64
    class_balance: tuple[float, ...] = (0.5, 0.5)
    class_names: tuple[str, ...] = ("class0", "class1")
    module_sizes: tuple[int, ...] = (4, 4, 4, 2)
    module_names: tuple[str, ...] = ("DIFF", "SHARED", "M2", "M3")
    planted: tuple[PlantedBlock, ...] = field(default_factory=_default_planted)
    base_correlation: float = 0.1
    noise_level: float = 0.0
    node_feature_mode: str = "pearson"
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        self.class_balance = tuple(float(b) for b in self.class_balance)
        self.class_names = tuple(self.class_names)
        self.module_sizes = tuple(int(s) for s in self.module_sizes)
        self.module_names = tuple(self.module_names)
        self.planted = tuple(
            b if isinstance(b, PlantedBlock) else PlantedBlock(b["module_a"], b["module_b"], tuple(b["deltas"]))
            for b in self.planted
        )
        if self.n < 1 or self.v < 2 or self.t < 2:
            raise ValueError("need n >= 1, v >= 2, t >= 2")
        if len(self.class_balance) != len(self.class_names):
            raise ValueError("class_balance and class_names differ in length")
        if abs(sum(self.class_balance) - 1.0) > 1e-9 or min(self.class_balance) < 0:
            raise ValueError("class_balance must be a probability vector")
        if len(self.module_names) != len(self.module_sizes):
            raise ValueError("module_names and module_sizes differ in length")
        for b in self.planted:
            if len(b.deltas) != len(self.class_names):
                raise ValueError("every planted block needs one delta per class")
            if not (0 <= b.module_a < len(self.module_sizes) and 0 <= b.module_b < len(self.module_sizes)):
                raise ValueError(f"planted block refers to unknown module: {b}")
        if self.node_feature_mode not in ("pearson", "identity"):
            raise ValueError(f"node_feature_mode must be pearson or identity, got {self.node_feature_mode!r}")

    def partition(self) -> ModulePartition:
        return ModulePartition.from_sizes(self.v, self.module_sizes, self.module_names)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["planted"] = [asdict(b) for b in self.planted]
        return d


def class_correlations(cfg: SyntheticConfig) -> list[np.ndarray]:
    """One target correlation matrix per class; raises if any is not positive definite."""
    part = cfg.partition()
    base = np.full((cfg.v, cfg.v), cfg.base_correlation)
    np.fill_diagonal(base, 1.0)
    out = []
    for c in range(len(cfg.class_names)):
        sigma = base.copy()
        for block in cfg.planted:
            rows, cols = part.members(block.module_a), part.members(block.module_b)
            sigma[np.ix_(rows, cols)] += block.deltas[c]
            sigma[np.ix_(cols, rows)] = sigma[np.ix_(rows, cols)].T
        np.fill_diagonal(sigma, 1.0)
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValueError(f"correlation matrix for class {cfg.class_names[c]!r} is not positive definite") from None
        out.append(sigma)
    return out


def class_covariances(cfg: SyntheticConfig) -> list[np.ndarray]:
    """Covariance of generated signals per class (correlation plus isotropic noise)."""
    return [s + cfg.noise_level**2 * np.eye(cfg.v) for s in class_correlations(cfg)]


def _label_counts(n: int, balance: tuple[float, ...]) -> list[int]:
    counts = [int(np.floor(n * b)) for b in balance]
    # hand out the remainder by largest fractional part, lowest class first on ties
    frac = sorted(range(len(balance)), key=lambda c: (-(n * balance[c] - counts[c]), c))
    for c in frac[: n - sum(counts)]:
        counts[c] += 1
    return counts


def generate_synthetic(cfg: SyntheticConfig) -> Cohort:
    """Gaussian time series whose class is encoded only in the ROI correlation structure.

    Each time point of sample i is an independent N(0, Σ_c) draw with
    Σ_c from :func:`class_correlations`; every ROI has unit marginal
    variance in every class.
    """
    factors = [np.linalg.cholesky(s) for s in class_correlations(cfg)]
    counts = _label_counts(cfg.n, cfg.class_balance)
    labels = np.concatenate([np.full(k, c, dtype=np.int64) for c, k in enumerate(counts)])
    labels = labels[Prng(derive_seed(cfg.seed, 0)).permutation(cfg.n)]
    samples = []
    for i, c in enumerate(labels):
        rng = Prng(derive_seed(cfg.seed, 1, i))
        z = rng.normal(size=(cfg.t, cfg.v))
        x = (z @ factors[c].T).T
        if cfg.noise_level:
            x = x + cfg.noise_level * rng.normal(size=(cfg.v, cfg.t))
        samples.append(BoldSample(x, int(c)))
    return Cohort(samples, cfg.class_names, cfg.partition(), generator=cfg.to_dict())


# ---------------------------------------------------------------------------
# graphs and node features computed from raw signals
# ---------------------------------------------------------------------------


def pearson_matrix(x: np.ndarray) -> np.ndarray:
    """|corr(x_p, x_q)| for all ROI pairs; zero-variance rows get 0 off-diagonal and warn."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    flat = norms == 0
    if flat.any():
        warnings.warn(f"zero-variance ROIs {np.flatnonzero(flat).tolist()}", ZeroVarianceWarning, stacklevel=2)
    safe = np.where(flat, 1.0, norms)
    unit = centered / safe[:, None]
    corr = np.abs(unit @ unit.T)
    corr = np.clip((corr + corr.T) / 2.0, 0.0, 1.0)
    corr[flat, :] = 0.0
    corr[:, flat] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr


def node_features(x: np.ndarray, mode: str = "pearson") -> np.ndarray:
    if mode == "pearson":
        return pearson_matrix(x)
    if mode == "identity":
        return np.eye(np.asarray(x).shape[0])
    raise ValueError(f"unknown node feature mode {mode!r}")


def uniform_graph(v: int) -> np.ndarray:
    if v < 1:
        raise ValueError("v must be at least 1")
    return np.ones((v, v))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def write_matrix(path: Path, m: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.atleast_2d(m):
            writer.writerow(["%.17g" % val for val in row])


def read_matrix(path: Path) -> np.ndarray:
    if not path.exists():
        raise CohortFormatError(f"missing file: {path}")
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise CohortFormatError(f"{path}:{lineno}: non-numeric cell") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise CohortFormatError(f"{path}: empty or ragged matrix")
    return np.array(rows)


def save_cohort(cohort: Cohort, directory: str | Path) -> None:
    directory = Path(directory)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    manifest = {
        "n": cohort.n,
        "v": cohort.v,
        "t": cohort.t,
        "class_names": list(cohort.class_names),
        "module_names": list(cohort.partition.names),
        "assignment": list(cohort.partition.assignment),
        "generator": cohort.generator,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    with open(directory / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"])
        for i, s in enumerate(cohort.samples):
            writer.writerow([i, s.label])
    for i, s in enumerate(cohort.samples):
        write_matrix(directory / "samples" / f"sample_{i}.csv", s.x)


def load_cohort(directory: str | Path) -> Cohort:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.exists():
        raise CohortFormatError(f"missing file: {mpath}")
    try:
        manifest = json.loads(mpath.read_text())
        n, v, t = int(manifest["n"]), int(manifest["v"]), int(manifest["t"])
        class_names = tuple(manifest["class_names"])
        partition = ModulePartition(tuple(manifest["assignment"]), tuple(manifest["module_names"]))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CohortFormatError(f"{mpath}: malformed manifest ({exc})") from None
    lpath = directory / "labels.csv"
    if not lpath.exists():
        raise CohortFormatError(f"missing file: {lpath}")
    labels: dict[int, int] = {}
    with open(lpath, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                labels[int(row["sample_id"])] = int(row["label"])
            except (KeyError, TypeError, ValueError):
                raise CohortFormatError(f"{lpath}:{reader.line_num}: bad row {row}") from None
    if sorted(labels) != list(range(n)):
        raise CohortFormatError(f"{lpath}: expected sample ids 0..{n - 1}")
    samples = []
    for i in range(n):
        spath = directory / "samples" / f"sample_{i}.csv"
        x = read_matrix(spath)
        if x.shape != (v, t):
            raise CohortFormatError(f"{spath}: shape {x.shape} disagrees with manifest ({v}, {t})")
        samples.append(BoldSample(x, labels[i]))
    try:
        return Cohort(samples, class_names, partition, generator=manifest.get("generator", {}))
    except ValueError as exc:
        raise CohortFormatError(f"{directory}: {exc}") from None


# ---------------------------------------------------------------------------
# cross-validation splits
# ---------------------------------------------------------------------------


def stratified_kfold(labels, k: int = 5, repetitions: int = 3, seed: int = DEFAULT_SEED):
    """``repetitions`` independent shuffled stratified k-fold partitions, repetition-major.

    Returns a list of ``(train_idx, test_idx)`` pairs of sorted index arrays.
    """
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if k < 2:
        raise ValueError("k must be at least 2")
    small = [int(c) for c, m in zip(classes, counts) if m < k]
    if small:
        raise ValueError(f"classes {small} have fewer than {k} members")
    splits = []
    for rep in range(repetitions):
        rng = Prng(derive_seed(seed, rep))
        folds: list[list[int]] = [[] for _ in range(k)]
        offset = 0
        for c in classes:
            members = np.flatnonzero(labels == c)
            members = members[rng.permutation(len(members))]
            for j, idx in enumerate(members):
                folds[(offset + j) % k].append(int(idx))
            offset += len(members)
        everything = np.arange(len(labels))
        for fold in folds:
            test = np.sort(np.array(fold, dtype=np.int64))
            splits.append((np.setdiff1d(everything, test), test))
    return splits
