"""Acceptance criteria, one test each, at their stated tolerances.

Every test appends a PASS/FAIL line to ``conftest.ACCEPTANCE_LINES``; the
lines are printed in the terminal summary.
"""
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from labelspace import cli
from labelspace.analysis import committee_evaluate, committee_vote, row_scores, sweep_k
from labelspace.dataset import SyntheticSpec, generate_synthetic, split
from labelspace.embeddings import LabelEmbeddingTable, random_embeddings
from labelspace.evaluation import (evaluate, f1_score, metrics_from_sets,
                                   rank_from_matrix)
from labelspace.model import ModelConfig, label_distance
from labelspace.training import (AdamConfig, LossConfig, hinge_rank_loss,
                                 loss_gradient_wrt_A, random_grad_check, train)

SEED = 11
N_TRAIN, N_TEST = 2000, 600


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


@pytest.fixture(scope="module")
def benchmark():
    spec = SyntheticSpec(num_instances=N_TRAIN + N_TEST, seed=SEED)
    dataset, table, _ = generate_synthetic(spec)
    train_set, test_set = split(dataset, N_TRAIN / (N_TRAIN + N_TEST), SEED)
    return train_set, test_set, table


@pytest.fixture(scope="module")
def trained(benchmark):
    train_set, test_set, table = benchmark
    start = time.perf_counter()
    params, report = train(train_set, table, ModelConfig(train_set.feature_dim, d=table.dim),
                           epochs=30, seed=SEED)
    return params, report, time.perf_counter() - start


def test_gradient_correctness():
    start = time.perf_counter()
    worst = max(random_grad_check(100, step=1e-5, seed=0))
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-4 and elapsed <= 60,
           f"gradient check: max rel error {worst:.2e} (<= 1e-4), {elapsed:.1f}s (<= 60s)")


def _exact_norm(A, v):
    return float(np.sqrt(sum(float(x) ** 2 for x in A @ v)))


def test_loss_contract():
    rng = np.random.default_rng(SEED)
    cases, failures = 0, []
    for case in range(1200):
        k, d = int(rng.integers(1, 5)), int(rng.integers(1, 6))
        if case % 2:
            # small integers produce exact ties with the margin boundary
            A = rng.integers(-2, 3, (k, d)).astype(float)
            P = rng.integers(-2, 3, (int(rng.integers(1, 4)), d)).astype(float)
            N = rng.integers(-2, 3, (int(rng.integers(1, 6)), d)).astype(float)
            m = float(rng.integers(1, 4))
        else:
            A = rng.standard_normal((k, d))
            P = rng.standard_normal((int(rng.integers(1, 4)), d))
            N = rng.standard_normal((int(rng.integers(1, 6)), d))
            m = float(rng.uniform(0.01, 3))
        loss, active = hinge_rank_loss(A, P, N, m)
        avg = sum(_exact_norm(A, p) for p in P) / len(P)
        clears = [_exact_norm(A, n) >= m + avg for n in N]
        grad = loss_gradient_wrt_A(A, P, N, m)
        parts = [hinge_rank_loss(A, P, n[None, :], m)[0] for n in N]
        ok = (loss >= 0
              and (loss == 0) == all(clears)
              and active.tolist() == [not c for c in clears]
              and (any(active) or np.all(grad == 0))
              and abs(loss - sum(parts)) <= 1e-12 * max(1.0, loss)
              and hinge_rank_loss(A, P, np.vstack([N, N]), m)[0]
              == pytest.approx(2 * loss, rel=1e-12, abs=0))
        cases += 1
        if not ok:
            failures.append(case)
    record(2, cases >= 1000 and not failures,
           f"loss contract: {cases} cases, {len(failures)} violations")


def _oracle(predicted, truth, n_classes):
    cp, cr = [], []
    for c in range(n_classes):
        n_p = sum(c in p for p in predicted)
        n_t = sum(c in t for t in truth)
        n_c = sum(c in p and c in t for p, t in zip(predicted, truth))
        if n_p:
            cp.append(Fraction(n_c, n_p))
        if n_t:
            cr.append(Fraction(n_c, n_t))
    hits = sum(len(p & t) for p, t in zip(predicted, truth))
    op = Fraction(hits, sum(map(len, predicted)))
    orr = Fraction(hits, sum(map(len, truth)))
    mean = lambda xs: sum(xs, Fraction(0)) / len(xs)
    f1 = lambda p, r: 2 * p * r / (p + r) if p + r else Fraction(0)
    CP, CR = mean(cp), mean(cr)
    return [float(v) for v in (CP, CR, f1(CP, CR), op, orr, f1(op, orr))]


def test_metric_oracle_equivalence():
    rng = np.random.default_rng(SEED)
    mismatches = 0
    for _ in range(1000):
        n_classes = int(rng.integers(2, 30))
        k_pred = int(rng.integers(1, n_classes))
        predicted, truth = [], []
        for _ in range(int(rng.integers(1, 40))):
            predicted.append(set(rng.choice(n_classes, k_pred, replace=False).tolist()))
            n_true = int(rng.integers(1, n_classes))
            truth.append(set(rng.choice(n_classes, n_true, replace=False).tolist()))
        got = list(metrics_from_sets(predicted, truth, n_classes).summary().values())
        mismatches += got != _oracle(predicted, truth, n_classes)
    record(3, mismatches == 0,
           f"metric oracle: 1000 configurations, {mismatches} mismatches (exact equality)")


def test_f1_combiner():
    value = f1_score(51.8, 63.8)
    record(4, abs(value - 57.2) <= 0.05, f"F1 combiner: O-F1 = {value:.3f} (57.2 +- 0.05)")


def test_synthetic_learnability(benchmark, trained):
    _, test_set, table = benchmark
    params, report, elapsed = trained
    o_r = evaluate(params, test_set, table, 3).o_recall
    ratio = report.losses[-1] / report.losses[0]
    record(5, o_r >= 0.90 and ratio < 0.1 and elapsed <= 600 and len(report.epochs) <= 50,
           f"learnability: O-R {o_r:.4f} (>= 0.90), loss ratio {ratio:.4f} (< 0.1), "
           f"{len(report.epochs)} epochs, {elapsed:.0f}s (<= 600s)")


def test_committee_decomposition():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(1000):
        k, d = int(rng.integers(1, 9)), int(rng.integers(1, 21))
        A = rng.standard_normal((k, d))
        w = rng.standard_normal(d)
        table = LabelEmbeddingTable(("w", "z"), np.vstack([w, np.ones(d)]))
        total = row_scores(A, table)[0].sum()
        direct = label_distance(A, w) ** 2
        worst = max(worst, abs(total - direct) / direct)
    table = random_embeddings(50, 20, SEED)
    same = all(
        committee_vote(A, table, n, kp) == set(rank_from_matrix(A, table).top(kp))
        for A in rng.standard_normal((200, 1, 20)) for n in (1, 3, 5) for kp in (1, 3, 5))
    record(6, worst <= 1e-12 and same,
           f"committee decomposition: max rel error {worst:.1e} (<= 1e-12), "
           f"k=1 voting equals full top-k: {same}")


def test_committee_trend(benchmark, trained):
    _, test_set, table = benchmark
    params = trained[0]
    ops = [committee_evaluate(params, test_set, table, n, 3).o_precision for n in (1, 3, 5)]
    ops.append(evaluate(params, test_set, table, 3).o_precision)
    ok = all(a <= b for a, b in zip(ops, ops[1:]))
    record(7, ok, "committee trend: O-P voting N=1/3/5, full = "
           + " <= ".join(f"{v:.4f}" for v in ops))


def test_k_stability(benchmark):
    train_set, test_set, table = benchmark
    rows = sweep_k(train_set, test_set, table, [2, 4, 8, 16],
                   ModelConfig(train_set.feature_dim, d=table.dim), epochs=20, seed=SEED)
    f1s = [100 * r.metrics.o_f1 for r in rows]
    spread = max(f1s) - min(f1s)
    record(8, spread <= 5.0, "k stability: O-F1 " + ", ".join(
        f"k={r.k} {v:.2f}" for r, v in zip(rows, f1s)) + f"; spread {spread:.2f} (<= 5)")


def test_invariances():
    rng = np.random.default_rng(SEED)
    table = random_embeddings(30, 8, SEED)
    left = homog = right = 0.0
    rankings_equal = True
    for _ in range(200):
        k = int(rng.integers(1, 7))
        A = rng.standard_normal((k, 8))
        w = rng.standard_normal(8)
        Q = _orthogonal(rng, k)
        base = label_distance(A, w)
        left = max(left, abs(label_distance(Q @ A, w) - base))
        rankings_equal &= np.array_equal(rank_from_matrix(Q @ A, table).indices,
                                         rank_from_matrix(A, table).indices)
        c = float(rng.uniform(-10, 10))
        homog = max(homog, abs(label_distance(A, c * w) - abs(c) * base) / (abs(c) * base))
        R = _orthogonal(rng, 8)
        right = max(right, abs(label_distance(A @ R.T, R @ w) - base))
    ok = left <= 1e-9 and homog <= 1e-9 and right <= 1e-9 and rankings_equal
    record(9, ok, f"invariances (200 draws each): left-orthogonal {left:.1e}, rankings "
           f"equal {rankings_equal}, homogeneity {homog:.1e}, right rotation {right:.1e}")


def _pipeline(root):
    data = root / "data"
    assert cli.main(["gen-synthetic", "--seed", str(SEED), "--out-dir", str(data)]) == 0
    common = ["--checkpoint", str(root / "model.ckpt"), "--embeddings",
              str(data / "embeddings.txt")]
    assert cli.main(["train", "--dataset", str(data / "train.txt"), "--embeddings",
                     str(data / "embeddings.txt"), "--epochs", "2", "--seed", str(SEED),
                     "--out", str(root / "model.ckpt")]) == 0
    assert cli.main(["predict", *common, "--features", str(data / "test.txt"),
                     "--out", str(root / "pred.txt")]) == 0
    assert cli.main(["evaluate", *common, "--dataset", str(data / "test.txt"),
                     "--out", str(root / "metrics.csv")]) == 0
    return [(root / name).read_bytes() for name in ("model.ckpt", "pred.txt", "metrics.csv")]


def test_determinism(tmp_path):
    first = _pipeline(tmp_path / "run1")
    second = _pipeline(tmp_path / "run2")
    same = [a == b for a, b in zip(first, second)]
    record(10, all(same), "determinism: checkpoint, prediction dump, metrics CSV "
           f"byte-identical: {same}")
