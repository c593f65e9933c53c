"""Empirical layer sensitivity: length-grid accuracy sweeps and
random-forest importance.

The sweep evaluates stochastic classification accuracy for every
combination of per-layer stream lengths on a dataset subset. A bagged
ensemble of variance-reduction regression trees is then fit with the
lengths as features and accuracy as the target; each feature's share of
the total impurity reduction, normalized to sum to 1, ranks how strongly
each layer's length drives accuracy.
"""

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import scinfer
from .scinfer import LengthConfig


@dataclass(frozen=True)
class SweepRecord:
    lengths: tuple
    accuracy: float
    accuracy_loss: float


def sweep(model, dataset_subset, length_grid, fixed_layers=(), seed: int = 0,
          base_length: int = 1024, stanh_states=None,
          n_jobs: int = 1) -> list:
    """Accuracy records for the Cartesian product of per-layer lengths.

    ``fixed_layers`` lists 0-based layer indices pinned to the base
    length; the remaining layers take every value of ``length_grid``.
    Every configuration is evaluated with the same seed, and the loss is
    measured against the all-base-length configuration.
    """
    grid = sorted(set(int(g) for g in length_grid))
    if not grid:
        raise ValueError("length grid must be nonempty")
    num_layers = len(model.weights)
    fixed = set(int(i) for i in fixed_layers)
    if any(not 0 <= i < num_layers for i in fixed):
        raise ValueError("fixed layer index out of range")
    free = [i for i in range(num_layers) if i not in fixed]

    baseline_cfg = LengthConfig.uniform(base_length, num_layers + 1)
    baseline = scinfer.classify(model, dataset_subset, baseline_cfg,
                                seed=seed, stanh_states=stanh_states)

    configs = []
    for combo in itertools.product(grid, repeat=len(free)):
        lengths = [base_length] * num_layers
        for i, v in zip(free, combo):
            lengths[i] = v
        configs.append(tuple(lengths))

    if n_jobs > 1:
        args = [(model, dataset_subset, lengths, base_length, seed,
                 stanh_states) for lengths in configs]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            accuracies = list(pool.map(_eval_config, args))
    else:
        accuracies = [_eval_config((model, dataset_subset, lengths,
                                    base_length, seed, stanh_states))
                      for lengths in configs]

    return [SweepRecord(lengths, acc, baseline - acc)
            for lengths, acc in zip(configs, accuracies)]


def _eval_config(args) -> float:
    model, dataset, lengths, base_length, seed, stanh_states = args
    cfg = LengthConfig(lengths, base_length)
    return scinfer.classify(model, dataset, cfg, seed=seed,
                            stanh_states=stanh_states)


def save_records(records, path) -> None:
    """One CSV row per configuration: L_1..L_{k-1}, accuracy, loss."""
    if not records:
        raise ValueError("no records to save")
    k = len(records[0].lengths)
    with open(path, "w", newline="") as f:
        out = csv.writer(f)
        out.writerow([f"L{i+1}" for i in range(k)]
                     + ["accuracy", "accuracy_loss"])
        for r in records:
            out.writerow(list(r.lengths)
                         + [f"{r.accuracy:.10g}", f"{r.accuracy_loss:.10g}"])


def load_records(path) -> list:
    records = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        k = len(header) - 2
        for row in reader:
            records.append(SweepRecord(tuple(int(v) for v in row[:k]),
                                       float(row[k]), float(row[k + 1])))
    return records


class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = value


class RegressionTree:
    """CART regression tree splitting on weighted variance reduction.

    All features are candidates at every split (there are only a few);
    leaves store training-target means.
    """

    def __init__(self, min_samples_leaf: int = 2):
        self.min_samples_leaf = min_samples_leaf
        self.root = None
        self.n_features = 0
        self.importance_raw = None

    def fit(self, x: np.ndarray, y: np.ndarray) -> "RegressionTree":
        self.n_features = x.shape[1]
        self.importance_raw = np.zeros(self.n_features)
        self.root = self._build(x, y)
        return self

    def _build(self, x, y):
        node = _TreeNode(float(y.mean()))
        n = len(y)
        if n < 2 * self.min_samples_leaf or np.all(y == y[0]):
            return node
        parent_sse = float(((y - y.mean()) ** 2).sum())
        best = None  # (sse_total, feature, threshold, mask)
        for f in range(self.n_features):
            col = x[:, f]
            for thr in _candidate_thresholds(col):
                mask = col <= thr
                n_left = int(mask.sum())
                if (n_left < self.min_samples_leaf
                        or n - n_left < self.min_samples_leaf):
                    continue
                yl, yr = y[mask], y[~mask]
                sse = (float(((yl - yl.mean()) ** 2).sum())
                       + float(((yr - yr.mean()) ** 2).sum()))
                if best is None or sse < best[0] - 1e-15:
                    best = (sse, f, thr, mask)
        if best is None or best[0] >= parent_sse:
            return node  # no split reduces the weighted node variance
        sse, f, thr, mask = best
        node.feature = f
        node.threshold = thr
        self.importance_raw[f] += parent_sse - sse
        node.left = self._build(x[mask], y[mask])
        node.right = self._build(x[~mask], y[~mask])
        return node

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(len(x))
        for i, row in enumerate(x):
            node = self.root
            while node.feature >= 0:
                node = node.left if row[node.feature] <= node.threshold \
                    else node.right
            out[i] = node.value
        return out

    @property
    def n_splits(self) -> int:
        def count(node):
            if node is None or node.feature < 0:
                return 0
            return 1 + count(node.left) + count(node.right)
        return count(self.root)


def _candidate_thresholds(col: np.ndarray) -> np.ndarray:
    vals = np.unique(col)
    return (vals[:-1] + vals[1:]) / 2.0


@dataclass
class RandomForest:
    """Bagged regression trees over (lengths -> accuracy) records."""

    trees: list
    bootstrap_seeds: list
    min_samples_leaf: int
    n_features: int

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        return np.mean([t.predict(x) for t in self.trees], axis=0)

    @property
    def n_splits(self) -> int:
        return sum(t.n_splits for t in self.trees)


def rf_fit(records, n_trees: int = 100, seed: int = 0,
           min_samples_leaf: int = 2) -> RandomForest:
    """Fit the forest: features are per-layer lengths, target is accuracy.

    Bootstrap samples (with replacement, bag size = record count) are
    drawn from a seeded generator, so refitting with the same seed yields
    an identical forest.
    """
    if len({r.lengths for r in records}) < 2:
        raise ValueError("need at least 2 distinct configurations")
    x = np.array([r.lengths for r in records], dtype=np.float64)
    y = np.array([r.accuracy for r in records])
    rng = np.random.default_rng(seed)
    trees, seeds = [], []
    for _ in range(n_trees):
        bag_seed = int(rng.integers(2 ** 63))
        idx = np.random.default_rng(bag_seed).integers(0, len(y), size=len(y))
        trees.append(RegressionTree(min_samples_leaf).fit(x[idx], y[idx]))
        seeds.append(bag_seed)
    return RandomForest(trees, seeds, min_samples_leaf, x.shape[1])


def rf_importance(forest: RandomForest) -> np.ndarray:
    """Per-feature impurity reduction across all trees, normalized to 1."""
    if forest.n_splits == 0:
        raise ValueError("forest has no splits; importance is undefined")
    total = np.zeros(forest.n_features)
    for t in forest.trees:
        total += t.importance_raw
    return total / total.sum()


def spearman_rank_correlation(a, b) -> float:
    """Spearman rho between two importance vectors (average ranks)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length vectors of size >= 2")
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0.0:
        return 0.0
    return float((ra * rb).sum() / denom)


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    sorted_v = v[order]
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks
