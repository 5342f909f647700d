import itertools

import numpy as np
import pytest

from bssnmr import scoring
from bssnmr.errors import DegenerateFitError, UndefinedStatistic
from bssnmr.numkernel import nelder_mead


# ---------------------------------------------------------------------------
# fit_pair
# ---------------------------------------------------------------------------

def test_fit_identity():
    rng = np.random.default_rng(0)
    pure = rng.random(200)
    fit = scoring.fit_pair(pure, pure)
    assert abs(fit.B) < 1e-12
    assert abs(fit.M - 1.0) < 1e-12
    assert fit.lack_of_fit < 1e-12


def test_fit_exact_affine_image():
    rng = np.random.default_rng(1)
    pure = rng.random(300)
    fit = scoring.fit_pair(3.0 + 2.0 * pure, pure)
    assert abs(fit.B - 3.0) < 1e-9
    assert abs(fit.M - 2.0) < 1e-9
    assert fit.lack_of_fit < 1e-12


def test_fit_negative_multiplier_inverts():
    rng = np.random.default_rng(2)
    pure = rng.random(100)
    fit = scoring.fit_pair(-pure, pure)
    assert fit.M < 0
    assert fit.lack_of_fit < 1e-12


def test_fit_matches_simplex_minimizer():
    rng = np.random.default_rng(3)
    for _ in range(100):
        pure = rng.standard_normal(256)
        predicted = rng.standard_normal(256)
        fit = scoring.fit_pair(predicted, pure)
        objective = scoring.lack_of_fit_objective(predicted, pure)
        res = nelder_mead(objective, [0.0, 1.0], x_tol=1e-10, f_tol=1e-14)
        assert fit.lack_of_fit <= res.fun + 1e-8
        assert abs(fit.lack_of_fit - res.fun) <= 1e-6 * max(res.fun, 1e-30)


def test_fit_scale_covariance():
    rng = np.random.default_rng(4)
    pure = rng.random(150)
    predicted = rng.standard_normal(150)
    base = scoring.fit_pair(predicted, pure)
    for c in (2.0, -0.5, 10.0):
        scaled = scoring.fit_pair(predicted, c * pure)
        assert abs(scaled.M - base.M / c) < 1e-9 * max(1.0, abs(base.M / c))
        assert abs(scaled.lack_of_fit - base.lack_of_fit) \
            < 1e-9 * max(base.lack_of_fit, 1e-30)


def test_fit_sign_symmetry():
    rng = np.random.default_rng(5)
    pure = rng.random(150)
    predicted = rng.standard_normal(150)
    fit = scoring.fit_pair(predicted, pure)
    flipped = scoring.fit_pair(-predicted, pure)
    assert abs(flipped.B + fit.B) < 1e-12
    assert abs(flipped.M + fit.M) < 1e-12
    assert abs(flipped.lack_of_fit - fit.lack_of_fit) < 1e-9 * max(fit.lack_of_fit, 1e-30)


def test_fit_rejects_constant_pure():
    with pytest.raises(DegenerateFitError):
        scoring.fit_pair(np.arange(5.0), np.full(5, 2.0))


# ---------------------------------------------------------------------------
# best_assignment
# ---------------------------------------------------------------------------

def brute_force_report(pred_rows, pure_rows):
    norms = np.linalg.norm(pred_rows, axis=1)
    scaled = pred_rows / norms[:, None]
    n, m = len(pred_rows), len(pure_rows)
    lof = np.array([[scoring.fit_pair(scaled[i], pure_rows[j]).lack_of_fit
                     for j in range(m)] for i in range(n)])
    score = 1.0 / np.maximum(lof, scoring.SCORE_EPSILON)
    best = None
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            total = sum(score[i, c] for i, c in enumerate(cols))
            if best is None or total > best[0]:
                best = (total, sorted((i, c) for i, c in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(n), m):
            total = sum(score[r, j] for j, r in enumerate(rows))
            if best is None or total > best[0]:
                best = (total, sorted((r, j) for j, r in enumerate(rows)))
    return best


def test_single_forced_pair():
    rng = np.random.default_rng(6)
    pure = rng.random(64)
    report = scoring.best_assignment(pure[None, :], [pure])
    assert [(i, j) for i, j, _ in report.pairs] == [(0, 0)]
    assert not report.discarded_predicted
    assert not report.unmatched_pure


def test_anti_stealing_assignment():
    """A prediction fitting both pures well must not steal the only pure a
    second prediction can match."""
    rng = np.random.default_rng(7)
    pure0 = np.abs(rng.random(128))
    pure1 = np.abs(rng.random(128))
    good_both = pure1 + 0.001 * rng.standard_normal(128)   # best for pure1
    only_pure0 = pure0 + 0.05 * rng.standard_normal(128)
    preds = np.vstack([good_both, only_pure0])
    report = scoring.best_assignment(preds, [pure0, pure1])
    _, expected = brute_force_report(preds, np.vstack([pure0, pure1]))
    assert sorted((i, j) for i, j, _ in report.pairs) == expected
    assert [(i, j) for i, j, _ in report.pairs] == [(0, 1), (1, 0)]


def test_assignment_matches_bruteforce_random():
    rng = np.random.default_rng(8)
    for n, m in [(3, 3), (4, 4), (5, 3), (3, 5)]:
        for _ in range(20):
            preds = rng.standard_normal((n, 32))
            pures = np.abs(rng.standard_normal((m, 32))) + 0.1
            report = scoring.best_assignment(preds, pures)
            best_total, best_pairs = brute_force_report(preds, pures)
            assert sorted((i, j) for i, j, _ in report.pairs) == best_pairs
            assert abs(report.ensemble_score - best_total) \
                <= 1e-9 * max(best_total, 1.0)
            assert len(report.pairs) == min(n, m)


def test_assignment_invariant_to_prediction_order():
    rng = np.random.default_rng(9)
    preds = rng.standard_normal((4, 64))
    pures = np.abs(rng.standard_normal((3, 64))) + 0.1
    base = scoring.best_assignment(preds, pures)
    perm = [2, 0, 3, 1]
    shuffled = scoring.best_assignment(preds[perm], pures)
    base_pairs = {(i, j) for i, j, _ in base.pairs}
    unshuffled = {(perm[i], j) for i, j, _ in shuffled.pairs}
    assert base_pairs == unshuffled
    assert abs(base.ensemble_score - shuffled.ensemble_score) \
        <= 1e-9 * max(base.ensemble_score, 1.0)


def test_assignment_scale_invariance():
    rng = np.random.default_rng(10)
    preds = rng.standard_normal((3, 64))
    pures = np.abs(rng.standard_normal((3, 64))) + 0.1
    base = scoring.best_assignment(preds, pures)
    scaled = scoring.best_assignment(preds * 37.5, pures)
    assert abs(base.dataset_error - scaled.dataset_error) \
        < 1e-9 * max(base.dataset_error, 1e-30)


def test_assignment_discards_excess_predictions():
    rng = np.random.default_rng(11)
    preds = rng.standard_normal((5, 32))
    pures = np.abs(rng.standard_normal((2, 32))) + 0.1
    report = scoring.best_assignment(preds, pures)
    assert len(report.pairs) == 2
    assert len(report.discarded_predicted) == 3
    assert not report.unmatched_pure


# ---------------------------------------------------------------------------
# dataset_error / overprediction_ratio
# ---------------------------------------------------------------------------

def test_dataset_error_zero_for_exact():
    rng = np.random.default_rng(12)
    pures = np.abs(rng.random((3, 64))) + 0.1
    report = scoring.best_assignment(pures.copy(), pures)
    assert report.dataset_error < 1e-25


def test_dataset_error_constant_residual():
    report = scoring.MatchReport(pairs=[(0, 0, scoring.PairFit(0.0, 1.0, 64 * 0.25))])
    # residual c = 0.5 at each of 64 points -> per-point error c^2
    assert abs(scoring.dataset_error(report, 64) - 0.25) < 1e-15


def test_dataset_error_averages_pairs():
    report = scoring.MatchReport(pairs=[
        (0, 0, scoring.PairFit(0.0, 1.0, 10.0)),
        (1, 1, scoring.PairFit(0.0, 1.0, 30.0)),
    ])
    assert abs(scoring.dataset_error(report, 10) - 2.0) < 1e-15


def test_dataset_error_empty_undefined():
    with pytest.raises(UndefinedStatistic):
        scoring.dataset_error(scoring.MatchReport(), 10)


def test_overprediction_ratio_identity():
    assert scoring.overprediction_ratio([1.0, 2.0], [1.0, 2.0]) == 1.0


def test_overprediction_ratio_value():
    assert abs(scoring.overprediction_ratio([1.0, 3.0], [4.0, 4.0]) - 2.0) < 1e-15


def test_overprediction_ratio_undefined_on_zero_baseline():
    with pytest.raises(UndefinedStatistic):
        scoring.overprediction_ratio([0.0, 0.0], [1.0])
    with pytest.raises(UndefinedStatistic):
        scoring.overprediction_ratio([], [1.0])
