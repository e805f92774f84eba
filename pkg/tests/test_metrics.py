import math

import numpy as np
import pytest

from cogdiag import metrics
from cogdiag.dataset import ResponseLog, group_identical
from cogdiag.errors import MetricError

from oracles import doc_reference, ids_reference


def make_logs(pairs):
    return [ResponseLog(l, q, s) for l, q, s in pairs]


def random_doc_instance(rng):
    n = int(rng.integers(2, 11))
    m = int(rng.integers(1, 6))
    k = int(rng.integers(1, 5))
    q = np.zeros((m, k), dtype=np.int8)
    for row in q:
        row[rng.choice(k, size=int(rng.integers(1, k + 1)), replace=False)] = 1
    # discrete trait levels force plenty of exact ties
    traits = rng.choice([0.1, 0.3, 0.5, 0.7], size=(n, k))
    logs = []
    for l in range(n):
        for que in range(m):
            if rng.random() < 0.75:
                logs.append(ResponseLog(l, que, int(rng.integers(0, 2))))
    return traits, logs, q


# ---------------------------------------------------------------- manhattan


def test_manhattan_identical_is_zero():
    assert metrics.manhattan([0.3, 0.4], [0.3, 0.4]) == 0.0


def test_manhattan_unit():
    assert metrics.manhattan([0, 0], [1, 0]) == 1.0


def test_manhattan_mixed():
    assert metrics.manhattan([0.2, 0.7], [0.5, 0.1]) == pytest.approx(0.9, abs=1e-12)


def test_manhattan_length_mismatch():
    with pytest.raises(MetricError, match="length"):
        metrics.manhattan([1.0], [1.0, 2.0])


# ---------------------------------------------------------------- ids


def test_ids_all_zero_distances_is_exactly_one():
    traits = np.array([[0.2, 0.8]] * 4)
    assert metrics.ids(traits, [[0, 1], [2, 3]]) == 1.0


def test_ids_single_pair_distance_one():
    traits = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert metrics.ids(traits, [[0, 1]]) == 0.25


def test_ids_no_pairs_error():
    with pytest.raises(MetricError, match="shadow augmentation"):
        metrics.ids(np.zeros((3, 2)), [[0], [1], [2]])


def test_ids_scalar_traits_accepted():
    traits = np.array([0.5, 0.5, 0.1])
    assert metrics.ids(traits, [[0, 1], [2]]) == 1.0


@pytest.mark.parametrize("seed", range(10))
def test_ids_matches_ordered_pair_reference(seed):
    rng = np.random.default_rng(seed)
    n, m, k = 12, 5, 3
    base = rng.integers(-1, 2, size=(n, m)).astype(np.int8)
    # plant duplicates so Z > 0
    for _ in range(4):
        i, j = rng.integers(0, n, size=2)
        base[j] = base[i]
    traits = rng.random((n, k))
    groups = group_identical(base)
    expected = ids_reference(base, traits)
    assert metrics.ids(traits, groups) == pytest.approx(expected, rel=1e-12)


def test_ids_one_iff_all_distances_zero():
    equal = np.array([[0.4, 0.6]] * 3)
    assert metrics.ids(equal, [[0, 1, 2]]) == 1.0
    nudged = equal.copy()
    nudged[2, 0] += 1e-9
    assert metrics.ids(nudged, [[0, 1, 2]]) < 1.0


def test_ids_strictly_decreases_when_a_distance_grows():
    traits = np.array([[0.5, 0.5], [0.5, 0.5], [0.2, 0.2], [0.2, 0.2]])
    groups = [[0, 1], [2, 3]]
    base = metrics.ids(traits, groups)
    traits[1, 0] += 0.05
    assert metrics.ids(traits, groups) < base


# ---------------------------------------------------------------- doc


def test_doc_single_concordant_pair():
    traits = np.array([[0.8], [0.3]])
    logs = make_logs([(0, 0, 1), (1, 0, 0)])
    result = metrics.doc(traits, logs, np.array([[1]]))
    assert result.per_question == {0: 1.0}
    assert result.mean == 1.0


def test_doc_single_discordant_pair():
    traits = np.array([[0.2], [0.6]])
    logs = make_logs([(0, 0, 1), (1, 0, 0)])
    assert metrics.doc(traits, logs, np.array([[1]])).mean == 0.0


def test_doc_half_concordant():
    traits = np.array([[0.8, 0.2], [0.3, 0.6]])
    logs = make_logs([(0, 0, 1), (1, 0, 0)])
    q = np.array([[1, 1]])
    result = metrics.doc(traits, logs, q)
    assert result.mean == 0.5
    ref_per_q, ref_mean = doc_reference(traits, logs, q)
    assert result.per_question == ref_per_q
    assert result.mean == ref_mean


def test_doc_tied_traits_drop_from_both_sides():
    traits = np.array([[0.5, 0.9], [0.5, 0.1]])
    logs = make_logs([(0, 0, 1), (1, 0, 0)])
    # concept 0 tied on both learners, concept 1 concordant
    assert metrics.doc(traits, logs, np.array([[1, 1]])).mean == 1.0


def test_doc_question_without_pairs_excluded():
    traits = np.array([[0.8], [0.3]])
    logs = make_logs([(0, 0, 1), (1, 0, 0), (0, 1, 1), (1, 1, 1)])
    result = metrics.doc(traits, logs, np.array([[1], [1]]))
    assert set(result.per_question) == {0}


def test_doc_error_when_nothing_defined():
    traits = np.array([[0.5], [0.5]])
    logs = make_logs([(0, 0, 1), (1, 0, 0)])
    with pytest.raises(MetricError, match="defined"):
        metrics.doc(traits, logs, np.array([[1]]))


@pytest.mark.parametrize("seed", range(30))
def test_doc_equals_triple_loop_reference(seed):
    rng = np.random.default_rng(100 + seed)
    traits, logs, q = random_doc_instance(rng)
    ref_per_q, ref_mean = doc_reference(traits, logs, q)
    if ref_mean is None:
        with pytest.raises(MetricError):
            metrics.doc(traits, logs, q)
        return
    result = metrics.doc(traits, logs, q)
    assert result.per_question == ref_per_q
    assert result.mean == ref_mean


@pytest.mark.parametrize("seed", range(5))
def test_doc_invariant_under_monotone_column_transform(seed):
    rng = np.random.default_rng(seed)
    traits, logs, q = random_doc_instance(rng)
    try:
        before = metrics.doc(traits, logs, q)
    except MetricError:
        return
    warped = traits.copy()
    warped[:, 0] = warped[:, 0] ** 3  # strictly monotone on (0,1)
    after = metrics.doc(warped, logs, q)
    assert after.per_question == before.per_question


# ---------------------------------------------------------------- reo


def test_reo_equal_inputs_exact_zero():
    rng = np.random.default_rng(0)
    for d in rng.uniform(1e-6, 1.0, size=200):
        assert metrics.reo(float(d), float(d)) == 0.0


def test_reo_quarter_identity_exact():
    assert metrics.reo(0.8, 0.6) == 0.25


def test_reo_negative_passthrough():
    assert metrics.reo(0.5, 0.6) < 0.0


def test_reo_zero_train_error():
    with pytest.raises(MetricError, match="doc_train"):
        metrics.reo(0.0, 0.5)


# ---------------------------------------------------------------- prediction


def test_classification_metrics_example():
    result = metrics.classification_metrics([0.9, 0.2], [1, 0])
    assert result.acc == 1.0
    assert result.rmse == pytest.approx(math.sqrt(0.025), abs=1e-12)
    assert result.f1 == 1.0


def test_threshold_boundary_counts_positive():
    result = metrics.classification_metrics([0.5], [1])
    assert result.acc == 1.0


def test_f1_zero_over_zero_convention():
    result = metrics.classification_metrics([0.1, 0.2], [1, 1])
    assert result.f1 == 0.0
    assert result.acc == 0.0


def test_classification_metrics_empty_error():
    with pytest.raises(MetricError, match="empty"):
        metrics.classification_metrics([], [])


def test_classification_metrics_length_mismatch():
    with pytest.raises(MetricError, match="mismatch"):
        metrics.classification_metrics([0.5], [1, 0])


# ---------------------------------------------------------------- histogram


def test_histogram_all_zero_distances():
    traits = np.array([[0.3, 0.3]] * 3)
    bins = metrics.distance_histogram(traits, [[0, 1, 2]], bin_width=0.05)
    assert len(bins) == 1
    assert bins[0].lo == 0.0
    assert bins[0].count == 3
    assert bins[0].cumulative == 1.0


def test_histogram_example_bins():
    # distances 0, 1, 1 with width 0.5
    traits = np.array([[0.0], [0.0], [1.0], [1.0]])
    groups = [[0, 1], [0, 2], [1, 3]]
    bins = metrics.distance_histogram(traits, groups, bin_width=0.5)
    assert [(b.lo, b.hi, b.count) for b in bins] == [(0.0, 0.5, 1), (1.0, 1.5, 2)]
    assert bins[-1].cumulative == 1.0


def test_histogram_no_pairs_error():
    with pytest.raises(MetricError):
        metrics.distance_histogram(np.zeros((2, 1)), [[0], [1]])


def test_histogram_bad_width():
    with pytest.raises(MetricError, match="bin_width"):
        metrics.distance_histogram(np.zeros((2, 1)), [[0, 1]], bin_width=0.0)


def test_histogram_csv_format(tmp_path):
    traits = np.array([[0.0], [0.25]])
    bins = metrics.distance_histogram(traits, [[0, 1]], bin_width=0.5)
    path = tmp_path / "hist.csv"
    metrics.write_histogram_csv(str(path), bins)
    assert path.read_text() == "bin_lo,bin_hi,count,cumulative\n0.0,0.5,1,1.0\n"


# ---------------------------------------------------------------- report


def test_metrics_report_round_trip():
    report = metrics.MetricsReport(ids_learner=1.0, acc=0.7, rmse=0.4, f1=0.6)
    d = report.to_dict()
    assert d["ids_learner"] == 1.0
    assert d["mean_doc_train"] is None


def test_metrics_report_validates_ranges():
    with pytest.raises(MetricError, match="ids_learner"):
        metrics.MetricsReport(ids_learner=1.2)
    with pytest.raises(MetricError, match="reo"):
        metrics.MetricsReport(reo=1.5)
    with pytest.raises(MetricError, match="acc"):
        metrics.MetricsReport(acc=-0.1)
