"""Predicted-to-pure component matching and error quantification.

Each predicted component is fitted to each pure component with an affine
map (offset B plus signed multiplier M) minimizing the residual sum of
squares; the optimal one-to-one assignment then maximizes the summed
inverse lack-of-fit, so a sloppy prediction can never steal the partner of
a nearly exact one.  Excess predictions are discarded with zero score
contribution.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateFitError, UndefinedStatistic
from .numkernel import assign_max

# Floor guarding 1/lack_of_fit when a fit is numerically perfect.
SCORE_EPSILON = 1e-300


@dataclass(frozen=True)
class PairFit:
    B: float
    M: float
    lack_of_fit: float


@dataclass
class MatchReport:
    pairs: list = field(default_factory=list)   # (predicted idx, pure idx, PairFit)
    ensemble_score: float = 0.0
    discarded_predicted: list = field(default_factory=list)
    unmatched_pure: list = field(default_factory=list)
    dataset_error: float = 0.0


def fit_pair(predicted, pure) -> PairFit:
    """Closed-form least-squares fit of predicted ~ B + M * pure."""
    predicted = np.asarray(predicted, dtype=float)
    pure = np.asarray(pure, dtype=float)
    if predicted.shape != pure.shape or predicted.ndim != 1 or predicted.size < 2:
        raise ValueError("fit_pair expects two equal-length vectors of size >= 2")
    pure_mean = pure.mean()
    centered = pure - pure_mean
    variance = float(centered @ centered)
    if variance == 0.0:
        raise DegenerateFitError("pure spectrum is constant; affine fit undefined")
    pred_mean = predicted.mean()
    m = float(centered @ (predicted - pred_mean)) / variance
    b = pred_mean - m * pure_mean
    residual = predicted - (b + m * pure)
    return PairFit(B=b, M=m, lack_of_fit=float(residual @ residual))


def lack_of_fit_objective(predicted, pure):
    """The (B, M) -> residual sum of squares map, for external minimizers."""
    predicted = np.asarray(predicted, dtype=float)
    pure = np.asarray(pure, dtype=float)

    def objective(bm):
        residual = predicted - (bm[0] + bm[1] * pure)
        return float(residual @ residual)

    return objective


def best_assignment(predicted, pures) -> MatchReport:
    """Optimal one-to-one matching by maximal summed inverse lack-of-fit.

    ``predicted`` is a ComponentSet or a (k, n) array; ``pures`` is a
    sequence of PureComponent or a (q, n) array.  Every predicted component
    is brought to unit Euclidean norm before fitting, so the reported
    errors do not depend on each technique's arbitrary output scaling and
    are comparable across techniques; a zero-norm prediction scores zero
    against everything instead of fitting perfectly with M = 0.
    """
    pred_rows = np.asarray(getattr(predicted, "components", predicted), dtype=float)
    pure_rows = np.asarray(
        [getattr(p, "intensity", p) for p in pures], dtype=float)
    if pred_rows.ndim != 2 or pure_rows.ndim != 2 or not len(pred_rows) or not len(pure_rows):
        raise ValueError("best_assignment needs at least one predicted and one pure")
    if pred_rows.shape[1] != pure_rows.shape[1]:
        raise ValueError("predicted and pure spectra have different lengths")

    norms = np.linalg.norm(pred_rows, axis=1)
    alive = norms > 0.0
    scaled = np.where(alive[:, None], pred_rows / np.where(alive, norms, 1.0)[:, None],
                      pred_rows)

    n_pred, n_pure = len(pred_rows), len(pure_rows)
    fits = [[fit_pair(scaled[i], pure_rows[j]) for j in range(n_pure)]
            for i in range(n_pred)]
    score = np.array([[1.0 / max(fits[i][j].lack_of_fit, SCORE_EPSILON)
                       if alive[i] else 0.0
                       for j in range(n_pure)] for i in range(n_pred)])
    pairs = assign_max(score)

    report = MatchReport()
    matched_pred, matched_pure = set(), set()
    for i, j in pairs:
        report.pairs.append((i, j, fits[i][j]))
        report.ensemble_score += score[i, j]
        matched_pred.add(i)
        matched_pure.add(j)
    report.discarded_predicted = sorted(set(range(n_pred)) - matched_pred)
    report.unmatched_pure = sorted(set(range(n_pure)) - matched_pure)
    report.dataset_error = dataset_error(report, pred_rows.shape[1])
    return report


def dataset_error(report: MatchReport, n_points: int) -> float:
    """Mean over matched pairs of the per-point lack-of-fit."""
    if not report.pairs:
        raise UndefinedStatistic("dataset error undefined with no matched pairs")
    return float(np.mean([fit.lack_of_fit / n_points
                          for _, _, fit in report.pairs]))


def overprediction_ratio(errors_at_exact: Sequence[float],
                         errors_at_plus_j: Sequence[float]) -> float:
    """Fractional error increase when predicting extra components."""
    exact = np.asarray(list(errors_at_exact), dtype=float)
    plus = np.asarray(list(errors_at_plus_j), dtype=float)
    if exact.size == 0 or plus.size == 0:
        raise UndefinedStatistic("overprediction ratio needs errors on both sides")
    denom = float(exact.mean())
    if denom == 0.0:
        raise UndefinedStatistic("overprediction ratio undefined: zero baseline error")
    return float(plus.mean()) / denom
