"""Multilabel performance indicators and the binary cross-entropy loss.

Conventions, shared with the report format:

- example-based set indicators (hamming_loss, aiming, recall, accuracy_ml,
  absolute_true, absolute_false) operate on the binary matrices Y and H;
  rows with an empty denominator contribute 0 to the average;
- ranking indicators (one_error, ranking_loss, coverage,
  average_precision) operate on the confidence matrix F; argmax ties break
  to the lowest index, tied pairs in ranking_loss count half, coverage
  assigns tied scores their worst (competition) rank, average_precision
  ranks ties stably by index;
- ranking_loss and average_precision skip rows where they are undefined
  and raise if every row is skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, as_tensor

METRIC_NAMES = (
    "hamming_loss",
    "one_error",
    "ranking_loss",
    "coverage",
    "average_precision",
    "aiming",
    "recall",
    "accuracy",
    "absolute_true",
    "absolute_false",
)


def _as_binary(m, name: str) -> np.ndarray:
    m = as_tensor(m)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D matrix, got shape {m.shape}")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError(f"{name} must contain only 0/1 entries")
    return m


@dataclass(frozen=True)
class PredictionSet:
    """Ground truth y, thresholded predictions h and confidences f for a
    batch of samples (rows) over l labels (columns)."""

    y: np.ndarray
    h: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        y = _as_binary(self.y, "y")
        h = _as_binary(self.h, "h")
        f = as_tensor(self.f)
        if y.shape != h.shape or y.shape != f.shape:
            raise ShapeError(
                f"y {y.shape}, h {h.shape} and f {f.shape} must share one shape"
            )
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "f", f)

    @classmethod
    def from_scores(cls, y, f, threshold: float = 0.5) -> "PredictionSet":
        """Derive h from f at the given threshold (score >= threshold -> 1)."""
        f = as_tensor(f)
        return cls(y, (f >= threshold).astype(np.float64), f)

    @property
    def n_samples(self) -> int:
        return self.y.shape[0]

    @property
    def n_labels(self) -> int:
        return self.y.shape[1]


def hamming_loss(ps: PredictionSet) -> float:
    """Fraction of label slots where prediction and truth disagree."""
    return float(np.mean(ps.y != ps.h))


def one_error(ps: PredictionSet) -> float:
    """Fraction of samples whose single most confident label is not relevant."""
    top = ps.f.argmax(axis=1)
    return float(np.mean(ps.y[np.arange(ps.n_samples), top] != 1.0))


def ranking_loss(ps: PredictionSet) -> float:
    """Average fraction of (relevant, irrelevant) label pairs ranked in the
    wrong order; tied pairs count half. Rows lacking either label kind are
    skipped."""
    total = 0.0
    counted = 0
    for i in range(ps.n_samples):
        rel = ps.y[i] == 1.0
        if not rel.any() or rel.all():
            continue
        fr = ps.f[i, rel][:, None]
        fi = ps.f[i, ~rel][None, :]
        bad = np.sum(fr < fi) + 0.5 * np.sum(fr == fi)
        total += bad / (fr.size * fi.size)
        counted += 1
    if counted == 0:
        raise ValueError("ranking_loss is undefined: no row has both a relevant and an irrelevant label")
    return total / counted


def coverage(ps: PredictionSet) -> float:
    """Average number of steps down the confidence-ranked label list needed
    to reach every relevant label (0 when the worst relevant label is at the
    top). Ties take the worst rank; rows without relevant labels add 0."""
    total = 0.0
    for i in range(ps.n_samples):
        rel = np.flatnonzero(ps.y[i] == 1.0)
        if rel.size == 0:
            continue
        worst = max(int(np.sum(ps.f[i] >= ps.f[i, j])) for j in rel)
        total += worst - 1
    return total / ps.n_samples


def average_precision(ps: PredictionSet) -> float:
    """For each relevant label, the fraction of labels ranked at or above it
    that are relevant, averaged over relevant labels and then over samples.
    Ties rank stably by index; rows without relevant labels are skipped."""
    total = 0.0
    counted = 0
    for i in range(ps.n_samples):
        rel = np.flatnonzero(ps.y[i] == 1.0)
        if rel.size == 0:
            continue
        order = np.argsort(-ps.f[i], kind="stable")
        rank = np.empty(ps.n_labels, dtype=np.int64)
        rank[order] = np.arange(1, ps.n_labels + 1)
        rel_ranks = np.sort(rank[rel])
        total += np.mean(np.arange(1, rel_ranks.size + 1) / rel_ranks)
        counted += 1
    if counted == 0:
        raise ValueError("average_precision is undefined: no row has a relevant label")
    return total / counted


def _row_sets(ps: PredictionSet):
    inter = np.sum(ps.h * ps.y, axis=1)
    union = np.sum(np.maximum(ps.h, ps.y), axis=1)
    return inter, union


def aiming(ps: PredictionSet) -> float:
    """Correctly predicted labels over predicted labels (0 for empty rows)."""
    inter, _ = _row_sets(ps)
    hs = ps.h.sum(axis=1)
    return float(np.mean(np.where(hs > 0, inter / np.maximum(hs, 1.0), 0.0)))


def recall(ps: PredictionSet) -> float:
    """Correctly predicted labels over actual labels (0 for empty rows)."""
    inter, _ = _row_sets(ps)
    ys = ps.y.sum(axis=1)
    return float(np.mean(np.where(ys > 0, inter / np.maximum(ys, 1.0), 0.0)))


def accuracy_ml(ps: PredictionSet) -> float:
    """Correctly predicted labels over the union of predicted and actual."""
    inter, union = _row_sets(ps)
    return float(np.mean(np.where(union > 0, inter / np.maximum(union, 1.0), 0.0)))


def absolute_true(ps: PredictionSet) -> float:
    """Fraction of samples predicted perfectly."""
    return float(np.mean(np.all(ps.h == ps.y, axis=1)))


def absolute_false(ps: PredictionSet) -> float:
    """Average fraction of labels in the union but not the intersection."""
    inter, union = _row_sets(ps)
    return float(np.mean((union - inter) / ps.n_labels))


def compute_all(ps: PredictionSet) -> dict:
    """All ten indicators keyed by their report field names."""
    return {
        "hamming_loss": hamming_loss(ps),
        "one_error": one_error(ps),
        "ranking_loss": ranking_loss(ps),
        "coverage": coverage(ps),
        "average_precision": average_precision(ps),
        "aiming": aiming(ps),
        "recall": recall(ps),
        "accuracy": accuracy_ml(ps),
        "absolute_true": absolute_true(ps),
        "absolute_false": absolute_false(ps),
    }


def format_record(dataset: str, model: str, fold, values: dict) -> str:
    """One flat text record per (dataset, model, fold), 6-decimal fields."""
    head = f"dataset={dataset} model={model} fold={fold}"
    body = " ".join(f"{name}={values[name]:.6f}" for name in METRIC_NAMES)
    return f"{head} {body}"


def bce_loss(y, p, weights=None, normalizer: float | None = None):
    """Binary cross entropy between targets ``y`` (binary or soft, in [0, 1])
    and predicted probabilities ``p``.

        loss = -(1/normalizer) * sum_i w_i * sum_j
               [ y_ij log p_ij + (1 - y_ij) log(1 - p_ij) ]

    ``normalizer`` defaults to the number of rows and ``w`` to ones.
    Probabilities are clamped to [1e-12, 1 - 1e-12] before the logs.
    Returns (loss, gradient w.r.t. p).
    """
    y = as_tensor(y)
    p = as_tensor(p)
    if y.shape != p.shape or y.ndim != 2:
        raise ShapeError(f"targets {y.shape} and predictions {p.shape} must be equal 2-D shapes")
    norm = float(y.shape[0]) if normalizer is None else float(normalizer)
    pc = np.clip(p, 1e-12, 1.0 - 1e-12)
    row_terms = np.sum(y * np.log(pc) + (1.0 - y) * np.log1p(-pc), axis=1)
    grad = -(y / pc - (1.0 - y) / (1.0 - pc)) / norm
    if weights is not None:
        w = as_tensor(weights)
        if w.shape != (y.shape[0],):
            raise ShapeError(f"weights must have shape ({y.shape[0]},), got {w.shape}")
        row_terms = row_terms * w
        grad = grad * w[:, None]
    return float(-row_terms.sum() / norm), grad
