"""Acceptance criteria; each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` to see the verdict lines.
"""

import math
import time

import numpy as np
import pytest

from wifinids import cli, evaluation, ingest, train
from wifinids import transform as T

from gradcheck import LAYER_KINDS, check_layer, check_loss, make_layer

GRAD_TOL = 1e-4
F1_TOL = 0.01
ACC_FLOOR = 99.0
TRAIN_BUDGET_S = 600.0
LATENCY_CEILING_US = 1000.0
SCALING_TOL = 0.20
SPLIT_TOL_PP = 0.5


@pytest.fixture
def verdict(capsys):
    def emit(n, name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else ""))
        return ok

    return emit


def test_criterion_1_parameter_counts(verdict):
    a = train.build_model("2d-2l", "binary").param_count()
    b = train.build_model("1d-2l", "multiclass").param_count()
    ok = verdict(1, "parameter counts", a == 10770 and b == 33912, f"2D-2L binary {a:,}, 1D-2L multiclass {b:,}")
    assert ok


def _pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def test_criterion_2_transform_properties(verdict):
    rng = np.random.default_rng(2)
    vecs = rng.uniform(-1, 1, (1000, 16))
    problems = []
    cyc, circ, gray = (T.transform_batch(t, vecs) for t in ("cyclic", "circulant", "grayscale-circulant"))
    corr, gaf = T.transform_batch("correlation", vecs), T.transform_batch("gaf", vecs)
    for n, f in enumerate(vecs):
        fl = f.tolist()
        ref_cyc = np.array([[fl[(i + j) % 16] for j in range(16)] for i in range(16)])
        ref_circ = np.array([[fl[(i - j) % 16] for j in range(16)] for i in range(16)])
        if not (np.array_equal(cyc[n], ref_cyc) and np.array_equal(circ[n], ref_circ)):
            problems.append(f"index identity, record {n}")
        direct = np.array([[math.cos(math.acos(a) + math.acos(b)) for b in fl] for a in fl])
        if np.max(np.abs(gaf[n] - direct)) > 1e-12:
            problems.append(f"gaf, record {n}")
        m = corr[n]
        if not (np.array_equal(m, m.T) and np.all(np.diag(m) == 1) and np.all(np.abs(m) <= 1)):
            problems.append(f"correlation structure, record {n}")
        cols = ref_cyc.T.tolist()
        worst = max(abs(m[i, j] - _pearson(cols[i], cols[j])) for i in range(16) for j in range(i + 1, 16))
        if worst > 1e-12:
            problems.append(f"correlation vs Pearson {worst:.1e}, record {n}")
        if np.max(np.abs(gray[n] - circ[n])) > 1 / 255:
            problems.append(f"grayscale deviation, record {n}")
    ok = verdict(2, "transform property suite, 1000 vectors", not problems, "; ".join(problems[:3]))
    assert ok


def test_criterion_3_gradient_checks(verdict):
    rng = np.random.default_rng(3)
    worst = {}
    for kind in LAYER_KINDS:
        errs = []
        for _ in range(20):
            layer, x = make_layer(kind, rng)
            errs.append(check_layer(layer, x, rng))
        worst[kind] = max(errs)
    for kind, k in (("binary-crossentropy", 2), ("sparse-categorical-crossentropy", 8)):
        worst[kind] = max(check_loss(kind, int(rng.integers(1, 6)), k, rng) for _ in range(20))
    bad = {k: v for k, v in worst.items() if not v < GRAD_TOL}
    top = max(worst.values())
    ok = verdict(3, f"finite-difference gradients over {len(worst)} components x 20", not bad,
                 f"max rel. error {top:.1e}" + (f", failing {sorted(bad)}" if bad else ""))
    assert ok


def test_criterion_4_metric_formula(verdict):
    # F1 recomputed from every published (precision, recall) pair.
    misses = []
    for task, table in evaluation.PUBLISHED_TABLES.items():
        for (tech, arch), (_, _, p, r, f1) in table.items():
            gap = abs(evaluation.f1_score(p, r) - f1)
            if gap > F1_TOL + 1e-9:
                misses.append((task, tech, arch, round(gap, 4)))
    example = round(evaluation.f1_score(99.90, 99.56), 2) == 99.73
    detail = f"{40 - len(misses)}/40 rows within {F1_TOL} pp; example 99.90/99.56 -> 99.73 {'ok' if example else 'off'}"
    if misses:
        detail += "; e.g. " + ", ".join(f"{t}/{a}/{b} off by {g}" for t, a, b, g in misses[:3])
    ok = verdict(4, "published F1 equals harmonic mean of published P and R", example and not misses, detail)
    assert ok, misses


def test_criterion_5_desk_scale_end_to_end(verdict):
    x, y = evaluation.generate_synthetic(2000, 8, seed=7)
    tr, va, te = ingest.stratified_split(y, seed=7)
    mk = lambda name, idx: ingest.DatasetSplit(name, x[idx], y[idx])
    cfg = train.TrainConfig(technique="gaf", architecture="1d-2l", task="multiclass", seed=7)
    start = time.perf_counter()
    clf, report = train.train(train.build_model("1d-2l", "multiclass", seed=7), mk("train", tr), mk("val", va), cfg)
    elapsed = time.perf_counter() - start
    rep = evaluation.evaluate(clf, mk("test", te))
    ok = rep.accuracy >= ACC_FLOOR and rep.f1 >= ACC_FLOOR and elapsed < TRAIN_BUDGET_S
    ok = verdict(5, "8-class synthetic, GAF + 1D-2L", ok,
                 f"test acc {rep.accuracy:.2f}%, weighted F1 {rep.f1:.2f}%, "
                 f"{report.stop_epoch} epochs in {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_6_latency(verdict):
    rng = np.random.default_rng(6)
    small = rng.uniform(-1, 1, (10_000, 16))
    per_arch = {}
    for arch in train.ARCHITECTURES:
        clf = train.build_model(arch, "binary")
        per_arch[arch] = evaluation.benchmark_latency(clf, small, repetitions=1).forward_mean_us
    clf = train.build_model("2d-2l", "binary")
    at_1e4 = evaluation.benchmark_latency(clf, small, repetitions=7).forward_mean_us
    at_1e5 = evaluation.benchmark_latency(clf, rng.uniform(-1, 1, (100_000, 16)), repetitions=3).forward_mean_us
    drift = abs(at_1e5 / at_1e4 - 1.0)
    ok = all(v <= LATENCY_CEILING_US for v in per_arch.values()) and drift <= SCALING_TOL
    shown = ", ".join(f"{a} {v:.0f} us" for a, v in per_arch.items())
    ok = verdict(6, "single-threaded forward latency", ok,
                 f"{shown}; 2d-2l per-record 1e4 {at_1e4:.1f} us vs 1e5 {at_1e5:.1f} us ({100 * drift:.1f}% drift)")
    assert ok


def test_criterion_7_determinism(verdict, tmp_path):
    x, y = evaluation.generate_synthetic(150, 8, seed=11)
    for name, idx in zip(ingest.SPLIT_NAMES, ingest.stratified_split(y, 11)):
        ingest.persist_split(ingest.DatasetSplit(name, x[idx], y[idx]), tmp_path / f"{name}.csv")
    argv = ["train", "--data-dir", str(tmp_path), "--task", "multiclass", "--arch", "2d-2l",
            "--max-epochs", "4", "--seed", "5", "--threads", "1"]
    runs = []
    for sub in ("a", "b"):
        assert cli.main(argv + ["--out-dir", str(tmp_path / sub)]) == 0
        (d,) = (tmp_path / sub).glob("train-*")
        runs.append(((d / "model.wnm").read_bytes(), (d / "epochs.csv").read_bytes()))
    same_model = runs[0][0] == runs[1][0]
    same_epochs = runs[0][1] == runs[1][1]
    ok = verdict(7, "repeat training runs are bit-identical", same_model and same_epochs,
                 f"model.wnm {'identical' if same_model else 'differs'}, epochs.csv {'identical' if same_epochs else 'differs'}")
    assert ok


def test_criterion_8_split_and_sampling(verdict, tmp_path):
    per_attack = 200
    x, y = evaluation.generate_imbalanced(per_attack, 8, 38, seed=8)
    evaluation.write_raw_csv(tmp_path / "corpus.csv", x, y, seed=8)
    assert cli.main(["preprocess", str(tmp_path / "corpus.csv"), "--seed", "8", "--out-dir", str(tmp_path / "o")]) == 0
    (d,) = (tmp_path / "o").glob("preprocess-*")
    parts = [ingest.load_split(d / f"{n}.csv") for n in ingest.SPLIT_NAMES]
    labels = np.concatenate([p.labels for p in parts])
    n_attack = int((labels != 0).sum())
    expected_normals = min(math.floor(8 * n_attack + 0.5), int((y == 0).sum()))
    problems = []
    if (labels == 0).sum() != expected_normals:
        problems.append(f"{(labels == 0).sum()} normals, expected {expected_normals}")
    total = len(labels)
    full = np.bincount(labels, minlength=8) / total
    for p, target in zip(parts, (49.0, 21.0, 30.0)):
        share = 100 * len(p) / total
        if abs(share - target) > SPLIT_TOL_PP:
            problems.append(f"{p.name} holds {share:.2f}%")
        drift = 100 * np.max(np.abs(np.bincount(p.labels, minlength=8) / len(p) - full))
        if drift > SPLIT_TOL_PP:
            problems.append(f"{p.name} class mix off by {drift:.2f} pp")
    ratio = (labels == 0).sum() / n_attack
    ok = verdict(8, "38:1 corpus -> 8:1 and 49/21/30 stratified splits", not problems,
                 f"ratio {ratio:.3f}:1, sizes {'/'.join(str(len(p)) for p in parts)}" + ("; " + "; ".join(problems) if problems else ""))
    assert ok
