"""Model choice via a random-forest classifier over summary vectors.

A reference table of prior predictions (model index + summaries) trains a
classification forest; the observed summaries are classified by majority
vote, and the posterior probability of the chosen model is approximated
by 1 minus the prediction of a regression forest fitted to the per-row
out-of-bag misclassification indicator.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._forest import build_tree, predict_tree
from .core import PointPattern, PriorSpec, ValidationError, Window
from .inference import _simulate_screened
from .parallel import STREAM_FOREST, STREAM_TABLE, int_seed, parallel_map, rng_for
from .samplers import DEFAULT_BURNIN, DEFAULT_GRID, simulate_lgcp, simulate_lgcp_strauss, simulate_strauss
from .summaries import summary_vector

log = logging.getLogger(__name__)

DEFAULT_TABLE_SIZE = 30_000
DEFAULT_N_TREES = 500
MODEL_NAMES = ("lgcp_strauss", "lgcp", "strauss")
MODEL_PARAM_COUNTS = {"lgcp_strauss": 5, "lgcp": 3, "strauss": 3}


def simulate_model(name: str, theta, window: Window, grid=DEFAULT_GRID, burnin=DEFAULT_BURNIN, seed=None) -> PointPattern:
    """Simulate one pattern under a named model, using theta's relevant parts."""
    if name == "lgcp_strauss":
        return simulate_lgcp_strauss(theta, window, grid=grid, burnin=burnin, seed=seed)
    if name == "lgcp":
        return simulate_lgcp(theta.mu, theta.sigma2, theta.s, window, grid=grid, seed=seed)
    if name == "strauss":
        return simulate_strauss(theta.mu, theta.gamma, theta.R, window, burnin=burnin, seed=seed)
    raise ValidationError(f"unknown model {name!r}")


@dataclass(frozen=True)
class ReferenceTable:
    """Prior predictions: model labels and summary rows, non-finite excluded."""

    X: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,) int
    model_names: tuple[str, ...]
    names: tuple[str, ...]
    excluded: int

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


def _table_task(index, prior, models, window, grid, burnin, m, summary_fn, master_seed):
    rng = rng_for(master_seed, STREAM_TABLE, index)
    label = int(rng.integers(len(models)))
    sim = partial(simulate_model, models[label], window=window, grid=grid, burnin=burnin)
    _, pattern, attempts = _simulate_screened(prior, lambda th, r: sim(th, seed=r), m, rng)
    t = summary_fn(pattern)
    return label, t.values, t.names, attempts


def build_reference_table(
    prior: PriorSpec,
    N: int = DEFAULT_TABLE_SIZE,
    m: int = 10,
    seed=0,
    window: Window | None = None,
    grid=DEFAULT_GRID,
    burnin=DEFAULT_BURNIN,
    models=MODEL_NAMES,
    summary_fn=summary_vector,
    workers: int = 1,
) -> ReferenceTable:
    """Uniform model index, parameters from the prior, pattern, summaries.

    Parameters irrelevant to the drawn model are sampled and ignored, which
    restricts the prior to each model's own parameters.
    """
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    if window is None:
        from .core import UNIT_SQUARE

        window = UNIT_SQUARE
    task = partial(
        _table_task,
        prior=prior,
        models=tuple(models),
        window=window,
        grid=grid,
        burnin=burnin,
        m=m,
        summary_fn=summary_fn,
        master_seed=seed,
    )
    rows = parallel_map(task, range(N), workers=workers, chunksize=16)
    labels = np.array([r[0] for r in rows])
    X = np.array([r[1] for r in rows])
    finite = np.all(np.isfinite(X), axis=1)
    excluded = int(np.count_nonzero(~finite))
    if excluded:
        log.info("excluded %d reference rows with non-finite summaries", excluded)
    return ReferenceTable(X[finite], labels[finite], tuple(models), rows[0][2], excluded)


@dataclass(frozen=True)
class Forest:
    """Trained forest plus its training data and out-of-bag bookkeeping."""

    trees: tuple  # per tree: (feature, threshold, left, right, value, inbag)
    n_classes: int  # 0 for regression
    class_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    seed: int
    mtry: int
    oob_prediction: np.ndarray  # majority OOB class / mean OOB response, NaN if never OOB
    oob_error: float  # misclassification rate / MSE over rows with OOB votes
    degenerate: bool  # single-class training table

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_votes(self, x) -> np.ndarray:
        """Per-class vote fractions at a single feature vector."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        votes = np.zeros(max(self.n_classes, 1))
        for feature, threshold, left, right, value, _ in self.trees:
            pred = predict_tree(feature, threshold, left, right, value, x)[0]
            if self.n_classes > 0:
                votes[int(pred)] += 1
            else:
                votes[0] += pred
        return votes / self.n_trees

    def predict(self, x) -> float:
        votes = self.predict_votes(x)
        return float(np.argmax(votes)) if self.n_classes > 0 else float(votes[0])


def _train_trees(tree_indices, X, y, n_classes, mtry, min_leaf, master_seed):
    out = []
    for t in tree_indices:
        out.append(build_tree(X, y, n_classes, mtry, min_leaf, int_seed(master_seed, STREAM_FOREST, t)))
    return out


def _train(X, y, n_classes, n_trees, mtry, min_leaf, seed, workers) -> tuple:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    chunks = np.array_split(np.arange(n_trees), max(1, min(workers * 4, n_trees)))
    task = partial(
        _train_trees, X=X, y=y, n_classes=n_classes, mtry=mtry, min_leaf=min_leaf, master_seed=seed
    )
    results = parallel_map(task, [c.tolist() for c in chunks], workers=workers)
    return tuple(tree for chunk in results for tree in chunk)


def train_forest(
    table: ReferenceTable,
    n_trees: int = DEFAULT_N_TREES,
    seed=0,
    mtry: int | None = None,
    workers: int = 1,
) -> Forest:
    """Classification forest: ceil(sqrt(d)) features per split, grown to purity."""
    X = table.X
    y = table.labels.astype(float)
    n_classes = len(table.model_names)
    present = np.unique(table.labels)
    degenerate = present.size < 2
    if degenerate:
        log.warning("reference table holds a single class; forest is degenerate")
    if mtry is None:
        mtry = math.ceil(math.sqrt(X.shape[1]))
    trees = _train(X, y, n_classes, n_trees, mtry, 1, seed, workers)
    oob_pred, oob_err = _oob_classification(trees, X, table.labels, n_classes)
    return Forest(
        trees, n_classes, table.model_names, X, table.labels, int(seed), mtry,
        oob_pred, oob_err, degenerate,
    )


def train_regression_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = DEFAULT_N_TREES,
    seed=0,
    mtry: int | None = None,
    workers: int = 1,
) -> Forest:
    """Regression forest: d/3 features per split, min leaf 5, mean leaves."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if mtry is None:
        mtry = max(1, X.shape[1] // 3)
    trees = _train(X, y, 0, n_trees, mtry, 5, seed, workers)
    preds = np.zeros(X.shape[0])
    counts = np.zeros(X.shape[0])
    for feature, threshold, left, right, value, inbag in trees:
        oob = inbag == 0
        if not np.any(oob):
            continue
        preds[oob] += predict_tree(feature, threshold, left, right, value, X[oob])
        counts[oob] += 1
    seen = counts > 0
    oob_pred = np.full(X.shape[0], np.nan)
    oob_pred[seen] = preds[seen] / counts[seen]
    oob_err = float(np.mean((oob_pred[seen] - y[seen]) ** 2)) if np.any(seen) else math.nan
    return Forest(trees, 0, (), X, y, int(seed), mtry, oob_pred, oob_err, False)


def _oob_classification(trees, X, labels, n_classes):
    votes = np.zeros((X.shape[0], n_classes))
    for feature, threshold, left, right, value, inbag in trees:
        oob = inbag == 0
        if not np.any(oob):
            continue
        pred = predict_tree(feature, threshold, left, right, value, X[oob]).astype(int)
        rows = np.flatnonzero(oob)
        np.add.at(votes, (rows, pred), 1)
    seen = votes.sum(axis=1) > 0
    oob_pred = np.full(X.shape[0], np.nan)
    oob_pred[seen] = np.argmax(votes[seen], axis=1)
    if np.any(seen):
        err = float(np.mean(oob_pred[seen] != labels[seen]))
    else:
        err = math.nan
    return oob_pred, err


@dataclass(frozen=True)
class ModelChoice:
    selected: str
    selected_index: int
    vote_fractions: dict[str, float]
    posterior_probability: float
    oob_error: float
    tie_broken: bool


def choose_model(forest: Forest, t_obs) -> ModelChoice:
    """Majority-vote model selection plus an approximate posterior probability.

    Exact vote ties break toward the model with the fewest parameters (then
    by table order) and are flagged.  The probability is 1 minus the
    prediction of a regression forest trained on the out-of-bag
    misclassification indicators, evaluated at the observed summaries.
    """
    if forest.n_classes == 0:
        raise ValidationError("choose_model needs a classification forest")
    x = np.asarray(getattr(t_obs, "values", t_obs), dtype=float)
    fractions = forest.predict_votes(x)
    best = float(fractions.max())
    tied = np.flatnonzero(fractions == best)
    tie_broken = tied.size > 1
    if tie_broken:
        order = sorted(tied, key=lambda i: (MODEL_PARAM_COUNTS.get(forest.class_names[i], 0), i))
        selected = int(order[0])
        log.info("vote tie between %s broken toward %s",
                 [forest.class_names[i] for i in tied], forest.class_names[selected])
    else:
        selected = int(tied[0])
    seen = ~np.isnan(forest.oob_prediction)
    miss = (forest.oob_prediction[seen] != forest.y[seen]).astype(float)
    reg = train_regression_forest(
        forest.X[seen], miss, n_trees=forest.n_trees, seed=int_seed(forest.seed, STREAM_FOREST, 10_000_019)
    )
    prob = float(np.clip(1.0 - reg.predict(x), 0.0, 1.0))
    return ModelChoice(
        selected=forest.class_names[selected],
        selected_index=selected,
        vote_fractions={name: float(fractions[i]) for i, name in enumerate(forest.class_names)},
        posterior_probability=prob,
        oob_error=forest.oob_error,
        tie_broken=tie_broken,
    )
