import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wifinids import evaluation as E
from wifinids import ingest, train


def report_for(technique, arch, f1, acc=99.0, task="binary"):
    cm = np.zeros((2, 2) if task == "binary" else (8, 8), dtype=np.int64)
    return E.MetricsReport(task, cm, acc, f1, f1, f1, technique=technique, architecture=arch)


# -- scalar metrics ---------------------------------------------------------


def test_binary_hand_counts():
    cm = np.array([[899, 1], [1, 99]])
    rep = E.metrics_from_confusion(cm, "binary")
    assert rep.accuracy == pytest.approx(99.8)
    assert (rep.precision, rep.recall, rep.f1) == pytest.approx((99.0, 99.0, 99.0))
    assert not rep.degenerate


def test_attack_is_positive_class():
    # all attacks found, some normals flagged
    rep = E.metrics_from_confusion(np.array([[90, 10], [0, 50]]), "binary")
    assert rep.recall == 100.0
    assert rep.precision == pytest.approx(100 * 50 / 60)


def test_all_normal_degenerate():
    y = np.zeros(20, int)
    rep = E.metrics_from_confusion(E.confusion_matrix(y, y, 2), "binary")
    assert rep.accuracy == 100.0
    assert (rep.precision, rep.recall, rep.f1) == (0.0, 0.0, 0.0)
    assert any("precision" in d for d in rep.degenerate)
    assert any("recall" in d for d in rep.degenerate)


def test_published_f1_example():
    assert round(E.f1_score(99.90, 99.56), 2) == 99.73


def test_f1_zero_zero():
    assert E.f1_score(0.0, 0.0) == 0.0


def test_confusion_rejects_bad_ids():
    with pytest.raises(E.EvaluationError):
        E.confusion_matrix([0, 3], [0, 1], 2)
    with pytest.raises(E.EvaluationError):
        E.confusion_matrix([0, 1], [0], 2)


def test_empty_confusion_rejected():
    with pytest.raises(E.EvaluationError):
        E.metrics_from_confusion(np.zeros((8, 8), int), "multiclass")


def brute_multiclass(y, p, k):
    """Weighted P/R/F1 from explicit per-class counting loops."""
    n = len(y)
    wp = wr = wf = 0.0
    for c in range(k):
        tp = sum(1 for a, b in zip(y, p) if a == c and b == c)
        pred = sum(1 for b in p if b == c)
        act = sum(1 for a in y if a == c)
        prec = 100 * tp / pred if pred else 0.0
        rec = 100 * tp / act if act else 0.0
        f = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        wp += act / n * prec
        wr += act / n * rec
        wf += act / n * f
    return wp, wr, wf


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), min_size=1, max_size=200))
def test_multiclass_properties(pairs):
    y = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    cm = E.confusion_matrix(y, p, 8)
    rep = E.metrics_from_confusion(cm, "multiclass")
    assert cm.sum() == len(pairs)
    assert rep.recall == pytest.approx(rep.accuracy, abs=1e-9)
    assert (rep.precision, rep.recall, rep.f1) == pytest.approx(brute_multiclass(y, p, 8), abs=1e-9)
    for m in (rep.accuracy, rep.precision, rep.recall, rep.f1, rep.macro.f1):
        assert 0.0 <= m <= 100.0


def test_multiclass_absent_class_flagged():
    y = np.array([0, 0, 1, 1])
    rep = E.metrics_from_confusion(E.confusion_matrix(y, y, 8), "multiclass")
    assert rep.accuracy == 100.0 and rep.f1 == 100.0
    assert any("Krack" in d for d in rep.degenerate)


def test_report_csv_roundtrip(tmp_path):
    rep = E.metrics_from_confusion(np.array([[899, 1], [1, 99]]), "binary")
    rep.technique, rep.architecture, rep.train_accuracy = "gaf", "2d-2l", 99.5
    path = tmp_path / "metrics.csv"
    path.write_text(rep.to_csv())
    back = E.load_report_csv(path)
    assert (back.technique, back.architecture, back.f1, back.train_accuracy) == ("gaf", "2d-2l", 99.0, 99.5)
    assert rep.confusion_csv().splitlines()[0] == "true\\pred,Normal,Attack"


# -- evaluate ---------------------------------------------------------------


def test_evaluate_checks_technique_and_size(rng):
    clf = train.build_model("2d-2l", "binary", technique="gaf")
    split = ingest.DatasetSplit("test", rng.uniform(-1, 1, (10, 16)), np.zeros(10, int))
    with pytest.raises(E.EvaluationError, match="gaf"):
        E.evaluate(clf, split, technique="cyclic")
    with pytest.raises(E.EvaluationError):
        E.evaluate(clf, ingest.DatasetSplit("test", np.empty((0, 16)), np.empty(0, int)))
    rep = E.evaluate(clf, split)
    assert rep.n_records == 10
    assert rep.per_record_us == pytest.approx(1e6 * rep.total_time_s / 10)


def test_published_deltas():
    rep = report_for("gaf", "2d-2l", 99.0, acc=99.5)
    deltas = dict((d[0], d[1:]) for d in E.published_deltas(rep))
    assert deltas["f1"] == pytest.approx((99.0, 99.73, 99.0 - 99.73))
    with pytest.raises(E.EvaluationError):
        E.published_deltas(report_for("gaf", "3d", 1.0))


# -- comparison table -------------------------------------------------------


def test_compare_single_row():
    csv_text, text = E.compare_report([report_for("gaf", "2d-2l", 99.7)])
    lines = csv_text.splitlines()
    assert len(lines) == 2 and lines[1].endswith(",*")


def test_compare_mixed_tasks():
    with pytest.raises(E.EvaluationError, match="mix"):
        E.compare_report([report_for("gaf", "2d-2l", 99.0), report_for("gaf", "1d-2l", 99.0, task="multiclass")])


def test_compare_tie_break():
    a = report_for("cyclic", "2d-1l", 99.0, acc=99.1)
    b = report_for("cyclic", "1d-2l", 99.0, acc=99.2)
    c = report_for("cyclic", "1d-1l", 99.0, acc=99.2)
    csv_text, _ = E.compare_report([a, b, c])
    starred = [l.split(",")[1] for l in csv_text.splitlines()[1:] if l.endswith("*")]
    assert starred == ["1D-1L"]


def test_compare_published_binary_gaf():
    reports = []
    for (tech, arch), (tr, te, p, r, f1) in E.PUBLISHED_BINARY.items():
        rep = E.MetricsReport("binary", np.zeros((2, 2)), te, p, r, f1, technique=tech, architecture=arch)
        rep.train_accuracy = tr
        reports.append(rep)
    csv_text, text = E.compare_report(reports)
    starred = {tuple(l.split(",")[:2]) for l in csv_text.splitlines()[1:] if l.endswith("*")}
    assert ("gaf", "2D-2L") in starred
    assert len(starred) == 5
    assert "Technique" in text.splitlines()[0]


# -- latency ----------------------------------------------------------------


def test_latency_stats(rng):
    clf = train.build_model("1d-1l", "binary")
    x = rng.uniform(-1, 1, (300, 16))
    stats = E.benchmark_latency(clf, x, repetitions=2, batch_size=64, min_records=100)
    assert stats.records == 300
    assert stats.mean_us == pytest.approx(1e6 * stats.total_s / 300)
    assert stats.forward_mean_us == pytest.approx(1e6 * stats.forward_total_s / 300)
    assert stats.forward_mean_us <= stats.mean_us * 1.5
    assert "single thread" in stats.summary()


def test_latency_needs_enough_records(rng):
    with pytest.raises(E.EvaluationError, match="at least"):
        E.benchmark_latency(train.build_model("1d-1l", "binary"), rng.uniform(-1, 1, (10, 16)))


# -- synthetic data ---------------------------------------------------------


def test_synthetic_shape_and_determinism():
    x, y = E.generate_synthetic(50, 8, seed=7)
    x2, y2 = E.generate_synthetic(50, 8, seed=7)
    assert x.shape == (400, 16) and np.bincount(y).tolist() == [50] * 8
    assert np.array_equal(x, x2) and np.array_equal(y, y2)
    assert np.all(np.abs(x) <= 1.0)
    assert not np.array_equal(x, E.generate_synthetic(50, 8, seed=8)[0])


def test_synthetic_rejects_bad_args():
    with pytest.raises(ValueError):
        E.generate_synthetic(0, 8, 1)
    with pytest.raises(ValueError):
        E.generate_synthetic(10, 3, 1)


def test_synthetic_means_distinct_under_negation():
    m = E.synthetic_means(8)
    for i in range(8):
        for j in range(8):
            assert not np.allclose(m[i], -m[j])
            if i != j:
                assert not np.allclose(m[i], m[j])


def test_imbalanced_ratio():
    _, y = E.generate_imbalanced(10, 8, 38, seed=1)
    assert (y == 0).sum() == 38 * 70


def test_raw_rows_parse_back(tmp_path):
    x, y = E.generate_synthetic(5, 8, seed=2)
    path = tmp_path / "raw.csv"
    E.write_raw_csv(path, x, y, extra_columns=3)
    records = list(ingest.parse_csv(path))
    values, ids = ingest.decode_records(records)
    assert np.array_equal(ids, y)
    assert values.shape == (40, 16)
    assert set(np.unique(values[:, ingest.TSFT_IDX])) <= {0.0, 1.0}
