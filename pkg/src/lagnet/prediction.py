"""One-step-ahead link probabilities, rolling evaluation, ROC and AUC.

A fitted pair model gives the four outcome probabilities for the next
slice; the probability of a single directed link marginalizes over the
partner's value (SR+BB for i->j, RS+BB for j->i).  Forecast quality is
scored against the held-out slice with exact ROC curves (a threshold at
every distinct probability) and the tie-aware rank statistic for AUC.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .design import CoefficientBlock, covariate_row
from .errors import DataError, NumericalError
from .likelihood import outcome_probs
from .network import NetworkSeries
from .optimizer import BatchResult, FitConfig, fit_all_pairs
from .selection import PenaltyGrid, bic_path


@dataclass
class PredictionSet:
    """Directed-link probabilities for one future slice.

    `probs` is an (n, n) matrix with NaN on the diagonal; entry [i-1, j-1]
    is the predicted probability of a link i -> j.  `truth` optionally
    holds the observed slice for scoring.
    """

    horizon: int
    probs: np.ndarray
    truth: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    def directed_entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, probability) arrays over all n(n-1) ordered pairs, 1-based."""
        n = self.n
        off = ~np.eye(n, dtype=bool)
        src, dst = np.nonzero(off)
        return src + 1, dst + 1, self.probs[off]

    def scores_and_labels(self) -> tuple[np.ndarray, np.ndarray]:
        if self.truth is None:
            raise DataError("prediction set has no truth slice to score against")
        off = ~np.eye(self.n, dtype=bool)
        return self.probs[off], self.truth[off].astype(int)


def predict_next(
    series: NetworkSeries,
    coefficients: Mapping[tuple[int, int], CoefficientBlock],
    truth: np.ndarray | None = None,
) -> PredictionSet:
    """Directed-link probabilities for slice T+1 given coefficients per pair."""
    n = series.n
    probs = np.full((n, n), np.nan)
    last = series.slice(series.num_slices)
    for i, j in series.pairs():
        try:
            block = coefficients[(i, j)]
        except KeyError:
            raise DataError(f"missing coefficients for pair ({i},{j})") from None
        x = covariate_row(last, i, j).astype(np.float64)
        eta = block.intercepts + block.weights @ x
        p = outcome_probs(eta)
        probs[i - 1, j - 1] = p[1] + p[3]
        probs[j - 1, i - 1] = p[2] + p[3]
    return PredictionSet(horizon=series.num_slices + 1, probs=probs, truth=truth)


@dataclass(frozen=True)
class RocCurve:
    """Exact ROC curve points (one threshold per distinct score) and its area."""

    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def _count_sorted(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Cumulative true/false positive counts at each distinct score, descending."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be equal-length vectors")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be binary")
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise DataError("need at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # indices where a score group ends
    ends = np.flatnonzero(np.diff(sorted_scores) != 0)
    ends = np.append(ends, scores.size - 1)
    tp = np.cumsum(sorted_labels)[ends]
    fp = (ends + 1) - tp
    return tp, fp, pos, neg


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> RocCurve:
    """ROC curve from (0,0) to (1,1); area computed exactly from counts."""
    tp, fp, pos, neg = _count_sorted(scores, labels)
    tp_path = np.concatenate([[0], tp])
    fp_path = np.concatenate([[0], fp])
    area_twice = int(np.sum(np.diff(fp_path) * (tp_path[:-1] + tp_path[1:])))
    return RocCurve(
        fpr=fp_path / neg,
        tpr=tp_path / pos,
        auc=area_twice / (2 * pos * neg),
    )


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a random positive outranks a random negative.

    Ties count one half, matching the Mann-Whitney statistic; computed by
    tie-group counting, independent of the ROC integration path.
    """
    tp, fp, pos, neg = _count_sorted(scores, labels)
    group_pos = np.diff(np.concatenate([[0], tp]))
    group_neg = np.diff(np.concatenate([[0], fp]))
    neg_below = neg - fp  # negatives with strictly smaller scores than the group
    num_twice = int(np.sum(group_pos * (2 * neg_below + group_neg)))
    return num_twice / (2 * pos * neg)


@dataclass
class EvaluationResult:
    """Rolling one-step-ahead forecast scores."""

    origins: list[int]                   # prefix lengths t; slice t+1 was predicted
    curves: list[RocCurve | None]        # None when the held-out slice is degenerate
    aucs: list[float | None]
    penalty: float
    predictions: list[PredictionSet]


def rolling_evaluation(
    series: NetworkSeries,
    config: FitConfig,
    holdout: int,
    grid: PenaltyGrid | None = None,
    workers: int = 1,
) -> EvaluationResult:
    """Refit on growing prefixes and score one-step-ahead predictions.

    For each origin t = T-H, ..., T-1 the model is fitted to slices 1..t
    and scored against slice t+1.  When `grid` is given the penalty is
    selected by BIC on the first prefix and held fixed afterwards;
    otherwise `config.penalty` is used throughout.  Later origins warm
    start from the previous origin's coefficients.
    """
    if holdout < 1:
        raise DataError(f"holdout must be >= 1, got {holdout}")
    if series.num_slices - holdout < 2:
        raise DataError("need at least 2 slices before the holdout window")

    first = series.num_slices - holdout
    warm: dict[tuple[int, int], CoefficientBlock] | None = None
    penalty = config.penalty
    origins, curves, aucs, predictions = [], [], [], []
    for t in range(first, series.num_slices):
        prefix = series.prefix(t)
        if t == first and grid is not None:
            path = bic_path(prefix, grid, config, workers=workers)
            penalty = path.selected_penalty
            batch = BatchResult(fits=path.selected_fits())
        else:
            batch = fit_all_pairs(
                prefix, replace(config, penalty=penalty), workers=workers, warm_starts=warm
            )
        if batch.failures:
            raise NumericalError(f"fit failures at origin {t}: {sorted(batch.failures)}")
        warm = batch.coefficient_blocks()
        truth = series.slice(t + 1)
        pred = predict_next(prefix, warm, truth=truth)
        origins.append(t)
        predictions.append(pred)
        scores, labels = pred.scores_and_labels()
        if labels.min() == labels.max():
            curves.append(None)
            aucs.append(None)
        else:
            curve = roc_curve(scores, labels)
            curves.append(curve)
            aucs.append(auc(scores, labels))
    return EvaluationResult(
        origins=origins, curves=curves, aucs=aucs, penalty=penalty, predictions=predictions
    )


def save_roc_csv(path: str | Path, curve: RocCurve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for f, t in zip(curve.fpr, curve.tpr):
            writer.writerow([repr(float(f)), repr(float(t))])


def save_auc_csv(path: str | Path, result: EvaluationResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["origin", "auc"])
        for origin, value in zip(result.origins, result.aucs):
            writer.writerow([origin, "" if value is None else repr(value)])


def save_predictions_csv(path: str | Path, pred: PredictionSet) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "probability"])
        src, dst, p = pred.directed_entries()
        for i, j, prob in zip(src, dst, p):
            writer.writerow([int(i), int(j), repr(float(prob))])
