import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fairmatch import metrics as M

scores = st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30)


def test_dp_gap_hand_values():
    assert M.dp_gap([0.2, 0.6, 0.9], [0.1, 0.4]) == pytest.approx(2 / 3)
    # threshold is inclusive
    assert M.dp_gap([0.5], [0.49]) == 1.0
    with pytest.raises(ValueError):
        M.dp_gap([0.5], [0.5], tau=1.0)


def test_dp_bar_gap():
    assert M.dp_bar_gap([0.2, 0.4], [0.9]) == pytest.approx(0.6)


def test_wasserstein_hand_values():
    assert M.wasserstein_dp([0.0, 1.0], [0.0, 1.0]) == 0.0
    assert M.wasserstein_dp([0.0], [0.25, 0.75]) == pytest.approx(0.5)
    assert M.wasserstein_dp([0.0, 0.0, 1.0], [0.5, 0.5]) == pytest.approx(0.5)


@settings(max_examples=100, deadline=None)
@given(scores, scores)
def test_wasserstein_matches_scipy(a, b):
    assert M.wasserstein_dp(a, b) == pytest.approx(stats.wasserstein_distance(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(scores, scores)
def test_gap_measures_are_ordered_and_bounded(a, b):
    bar, w, ks, tv = M.dp_bar_gap(a, b), M.wasserstein_dp(a, b), M.ks_dp(a, b), M.tv_dp(a, b)
    assert bar <= w + 1e-12
    # scores live in [0, 1], so W1 <= KS
    assert w <= ks + 1e-12
    for v in (bar, w, ks, tv):
        assert 0.0 <= v <= 1.0 + 1e-12
    assert M.wasserstein_dp(b, a) == pytest.approx(w, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(scores, scores)
@pytest.mark.filterwarnings("ignore:divide by zero:RuntimeWarning")
def test_ks_matches_scipy(a, b):
    assert M.ks_dp(a, b) == pytest.approx(stats.ks_2samp(a, b, method="asymp").statistic, abs=1e-12)


def test_tv_binning():
    assert M.tv_dp([0.001, 0.002], [0.003]) == 0.0
    assert M.tv_dp([0.0], [1.0]) == 1.0
    assert M.tv_dp([0.1, 0.9], [0.1, 0.1]) == pytest.approx(0.5)


def test_subset_dp_bar():
    s = np.array([0.2, 0.8, 0.4, 1.0])
    g = np.array([0, 1, 0, 1])
    assert M.subset_dp_bar(s, g, [True, True, False, False]) == pytest.approx(0.6)
    with pytest.raises(ValueError, match="undefined subset"):
        M.subset_dp_bar(s, g, [True, False, True, False])


def test_random_hyperplane_subsets_shape_and_seed():
    X = np.random.default_rng(0).normal(size=(50, 3))
    a = M.random_hyperplane_subsets(X, 20, seed=4)
    assert a.shape == (20, 50) and a.dtype == bool
    np.testing.assert_array_equal(a, M.random_hyperplane_subsets(X, 20, seed=4))
    # half-spaces through the origin: the mirrored point falls on the other side
    Y = np.vstack([X, -X])
    masks = M.random_hyperplane_subsets(Y, 10, seed=1)
    assert np.all(masks[:, :50] != masks[:, 50:])


def test_eo_gaps_hand_values():
    s = np.array([0.9, 0.1, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1])
    y = np.array([1, 1, 0, 0, 1, 1, 0, 0])
    g = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    tpr, fpr, eo = M.eo_gaps(s, y, g)
    assert (tpr, fpr, eo) == (0.0, 1.0, 0.5)
    with pytest.raises(ValueError, match="empty cell"):
        M.eo_gaps(s[:4], y[:4], np.zeros(4))


def test_consistency():
    def ignores_s(X, s):
        return np.asarray(X)[:, 0]

    def uses_s(X, s):
        return np.broadcast_to(np.asarray(s, dtype=float), (len(X),))

    X = np.array([[0.2], [0.7]])
    assert M.consistency(ignores_s, X) == 1.0
    assert M.consistency(uses_s, X) == 0.0


def test_spearman():
    assert M.spearman_rank_corr([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert M.spearman_rank_corr([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_flip_confusion():
    unfair = np.array([0.9, 0.9, 0.1, 0.1, 0.9])
    fair = np.array([0.1, 0.9, 0.9, 0.1, 0.9])
    g = np.array([0, 0, 1, 1, 1])
    out = M.flip_confusion(unfair, fair, g)
    assert out["undesirable_flips"] == {"0": 1, "1": 1}
    assert out["undesirable_total"] == 2
    assert out["confusion"]["0"] == [[0, 1], [0, 1]]
    same = M.flip_confusion(unfair, unfair, g)
    assert same["undesirable_total"] == 0


def test_report_roundtrip_and_csv():
    rep = M.FairnessReport(0.8, 0.1, 0.05, 0.06, 0.2, 0.15, 0.1, 0.0, 0.05, mdp=0.07)
    back = M.FairnessReport.from_dict(json.loads(rep.to_json()))
    assert back == rep
    row = rep.csv_row()
    assert len(row) == len(M.FairnessReport.CSV_COLUMNS)
    assert row[0] == "0.8" and row[-1] == ""
    text = M.format_csv(("a", "b"), [[1, 2]])
    assert text == "a,b\n1,2\n"
