"""Ingestion, windowing, synthetic benchmark, thresholding, and metrics."""

import numpy as np
import pytest

from fkmad.data import (DataError, LabeledSeries, feature_stats, load_csv,
                        make_windows, split_series, standardize, write_csv)
from fkmad.evaluate import (EvalReport, ThresholdPolicy, apply_threshold,
                            evaluate, point_adjust, zscore_detector)
from fkmad.spectral import dft, high_frequency_ratio
from fkmad.synth import AnomalySpec, synth_benchmark


# --- CSV loading


def test_csv_round_trip_with_labels(tmp_path):
    path = str(tmp_path / "series.csv")
    series = LabeledSeries(values=np.array([[1.0, 2.0], [3.0, 4.0], [5.5, -1.25]]),
                           labels=np.array([0, 1, 0]))
    write_csv(series, path)
    back = load_csv(path)
    assert back.length == 3 and back.width == 2
    np.testing.assert_array_equal(back.values, series.values)
    np.testing.assert_array_equal(back.labels, [0, 1, 0])


def test_csv_without_label_column(tmp_path):
    path = str(tmp_path / "plain.csv")
    with open(path, "w") as fh:
        fh.write("a,b\n1.0,2.0\n3.0,4.0\n")
    back = load_csv(path)
    assert back.labels is None
    assert back.feature_names == ("a", "b")


def test_csv_nan_cell_names_row_and_column(tmp_path):
    path = str(tmp_path / "bad.csv")
    with open(path, "w") as fh:
        fh.write("x,y\n1.0,2.0\n3.0,NaN\n")
    with pytest.raises(DataError) as exc:
        load_csv(path)
    msg = str(exc.value)
    assert "row 3" in msg and "'y'" in msg


def test_csv_non_numeric_cell_rejected(tmp_path):
    path = str(tmp_path / "bad2.csv")
    with open(path, "w") as fh:
        fh.write("x\nhello\n")
    with pytest.raises(DataError, match="row 2"):
        load_csv(path)


def test_csv_bad_label_rejected(tmp_path):
    path = str(tmp_path / "bad3.csv")
    with open(path, "w") as fh:
        fh.write("x,label\n1.0,2\n")
    with pytest.raises(DataError, match="label"):
        load_csv(path)


def test_csv_empty_file_rejected(tmp_path):
    path = str(tmp_path / "empty.csv")
    open(path, "w").close()
    with pytest.raises(DataError):
        load_csv(path)


def test_csv_ragged_row_rejected(tmp_path):
    path = str(tmp_path / "ragged.csv")
    with open(path, "w") as fh:
        fh.write("x,y\n1.0,2.0\n3.0\n")
    with pytest.raises(DataError, match="row 3"):
        load_csv(path)


def test_csv_float_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    path = str(tmp_path / "precise.csv")
    series = LabeledSeries(values=rng.standard_normal((20, 3)))
    write_csv(series, path)
    np.testing.assert_array_equal(load_csv(path).values, series.values)


# --- windowing and standardization


def test_window_count_stride_equal_window():
    values = np.arange(20.0).reshape(10, 2)
    assert make_windows(values, 5, 5).shape == (2, 5, 2)


def test_window_count_stride_two():
    values = np.arange(20.0).reshape(10, 2)
    # starts 0, 2, 4; 6 would exceed T-window? no: count = (10-5)//2 + 1 = 3
    assert make_windows(values, 5, 2).shape == (3, 5, 2)


def test_window_longer_than_series_rejected():
    with pytest.raises(DataError, match="window"):
        make_windows(np.ones((4, 1)), 5, 1)


def test_window_concat_round_trip():
    rng = np.random.default_rng(1)
    values = rng.standard_normal((12, 2))
    wins = make_windows(values, 4, 4)
    np.testing.assert_array_equal(wins.reshape(-1, 2), values)


def test_standardization_zero_mean_unit_variance():
    rng = np.random.default_rng(2)
    values = 3.0 + 2.5 * rng.standard_normal((500, 3))
    mean, std = feature_stats(values)
    z = standardize(values, mean, std)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)


def test_constant_feature_std_floor():
    values = np.column_stack([np.full(10, 7.0), np.arange(10.0)])
    mean, std = feature_stats(values)
    assert std[0] == 1.0  # constant feature: divide by 1, not 0
    z = standardize(values, mean, std)
    np.testing.assert_array_equal(z[:, 0], 0.0)


def test_split_series_chronological():
    series = LabeledSeries(values=np.arange(10.0)[:, None],
                           labels=np.array([0] * 5 + [1] * 5))
    train, rest = split_series(series, 0.6)
    assert train.length == 6 and rest.length == 4
    np.testing.assert_array_equal(train.values[:, 0], np.arange(6.0))
    np.testing.assert_array_equal(rest.labels, [1, 1, 1, 1])


# --- synthetic benchmark


def test_synth_deterministic_per_seed():
    spec = AnomalySpec(kinds=("spike",))
    a = synth_benchmark("multisine", 2048, 3, spec, seed=9)
    b = synth_benchmark("multisine", 2048, 3, spec, seed=9)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.labels, b.labels)
    c = synth_benchmark("multisine", 2048, 3, spec, seed=10)
    assert not np.array_equal(a.values, c.values)


def test_synth_ar1_lag_one_autocorrelation():
    spec = AnomalySpec(kinds=("spike",), density=0.0)
    series = synth_benchmark("ar1", 10000, 2, spec, seed=0)
    for c in range(2):
        x = series.values[:, c]
        x = x - x.mean()
        rho = (x[1:] * x[:-1]).sum() / (x * x).sum()
        assert 0.85 <= rho <= 0.95, rho


def test_synth_multisine_clean_band_limited():
    spec = AnomalySpec(kinds=("spike",), density=0.0)
    series = synth_benchmark("multisine", 4096, 1, spec, seed=3)
    # tone periods >= 24 keep all tone bins far below half-spectrum cutoff
    power = dft(series.values[:1024, 0]).power()
    assert high_frequency_ratio(power, 0.5) <= 0.05


def test_synth_density_cap_rejected():
    with pytest.raises(ValueError, match="density"):
        AnomalySpec(kinds=("spike",), density=0.6).validate()


def test_synth_unknown_kind_rejected():
    with pytest.raises(ValueError, match="kind"):
        synth_benchmark("brownian", 512, 2, AnomalySpec(), seed=0)


def test_synth_labels_cover_all_event_kinds():
    spec = AnomalySpec(kinds=("spike", "level-shift", "frequency-shift",
                              "variance-burst"), density=0.02)
    series = synth_benchmark("mixed", 8192, 4, spec, seed=4)
    frac = series.labels.mean()
    assert 0.0 < frac <= 0.03
    assert set(np.unique(series.labels)) == {0, 1}


def test_synth_event_separation():
    spec = AnomalySpec(kinds=("spike",), density=0.01, min_gap=64)
    series = synth_benchmark("multisine", 8192, 2, spec, seed=5)
    flips = np.flatnonzero(np.diff(series.labels) == 1)  # segment starts
    assert len(flips) >= 2
    assert np.all(np.diff(flips) >= 64)


# --- thresholding and metrics


def test_evaluate_perfect_predictions():
    rep = evaluate(np.array([0.9, 0.1, 0.8, 0.2]), np.array([1, 0, 1, 0]),
                   ThresholdPolicy("topk", 0.5))
    assert rep.precision == rep.recall == rep.f1 == 1.0
    assert rep.adjusted_f1 == 1.0


def test_evaluate_no_positives_convention():
    rep = evaluate(np.array([0.1, 0.2, 0.3, 0.4]), np.array([1, 1, 0, 0]),
                   ThresholdPolicy("fixed", 10.0))
    assert rep.precision == 0.0 and rep.recall == 0.0 and rep.f1 == 0.0
    assert rep.n_flagged == 0


def test_evaluate_degenerate_labels_flagged():
    rep = evaluate(np.array([0.1, 0.9]), np.array([0, 0]),
                   ThresholdPolicy("topk", 0.5))
    assert rep.degenerate_labels


def test_topk_flag_count_and_threshold():
    scores = np.array([0.5, 0.9, 0.1, 0.7])
    preds, threshold = apply_threshold(scores, ThresholdPolicy("topk", 0.5))
    np.testing.assert_array_equal(preds, [0, 1, 0, 1])
    assert threshold == 0.7  # the weakest flagged score


def test_topk_ties_broken_by_position():
    scores = np.array([0.5, 0.5, 0.5, 0.5])
    preds, _ = apply_threshold(scores, ThresholdPolicy("topk", 0.5))
    np.testing.assert_array_equal(preds, [1, 1, 0, 0])  # stable order


def test_topk_recall_monotone_in_ratio():
    rng = np.random.default_rng(6)
    scores = rng.uniform(0, 1, 200)
    labels = (rng.uniform(0, 1, 200) < 0.1).astype(int)
    labels[0] = 1  # at least one anomaly
    last = -1.0
    for ratio in (0.05, 0.1, 0.2, 0.4, 0.8):
        rep = evaluate(scores, labels, ThresholdPolicy("topk", ratio))
        assert rep.recall >= last
        last = rep.recall


def test_point_adjust_segment_completion():
    preds = np.array([0, 1, 0, 0, 0, 0, 1, 0])
    labels = np.array([1, 1, 1, 0, 0, 1, 1, 0])
    adjusted = point_adjust(preds, labels)
    # hit in each segment inflates the full segment; stray FPs remain
    np.testing.assert_array_equal(adjusted, [1, 1, 1, 0, 0, 1, 1, 0])


def test_point_adjust_missed_segment_stays_missed():
    preds = np.array([0, 0, 0, 1])
    labels = np.array([1, 1, 0, 0])
    adjusted = point_adjust(preds, labels)
    np.testing.assert_array_equal(adjusted, [0, 0, 0, 1])


def test_point_adjusted_f1_never_below_raw():
    rng = np.random.default_rng(7)
    for _ in range(30):
        scores = rng.uniform(0, 1, 120)
        labels = np.zeros(120, dtype=int)
        for start in rng.integers(0, 110, 3):
            labels[start:start + rng.integers(2, 8)] = 1
        rep = evaluate(scores, labels, ThresholdPolicy("topk", 0.1))
        assert rep.adjusted_f1 >= rep.f1 - 1e-12


def test_f1_identity():
    rng = np.random.default_rng(8)
    scores = rng.uniform(0, 1, 64)
    labels = (rng.uniform(0, 1, 64) < 0.2).astype(int)
    labels[3] = 1
    rep = evaluate(scores, labels, ThresholdPolicy("topk", 0.25))
    if rep.precision + rep.recall > 0:
        want = 2 * rep.precision * rep.recall / (rep.precision + rep.recall)
        assert rep.f1 == pytest.approx(want, abs=1e-12)
    else:
        assert rep.f1 == 0.0


def test_evaluate_length_mismatch_rejected():
    with pytest.raises(DataError, match="differ"):
        evaluate(np.ones(4), np.ones(5, dtype=int), ThresholdPolicy("topk", 0.5))


def test_zscore_detector_peaks_at_outlier():
    rng = np.random.default_rng(9)
    train = rng.standard_normal((500, 2))
    test = rng.standard_normal((100, 2))
    test[40] += 8.0
    scores = zscore_detector(test, train)
    assert scores.argmax() == 40


def test_eval_report_json_round_trip():
    import json
    rep = EvalReport(precision=0.5, recall=1.0, f1=2 / 3,
                     adjusted_precision=0.5, adjusted_recall=1.0,
                     adjusted_f1=2 / 3, threshold=0.7, n_flagged=4)
    parsed = json.loads(rep.to_json())
    assert parsed["f1"] == pytest.approx(2 / 3)
    assert parsed["degenerate_labels"] is False
