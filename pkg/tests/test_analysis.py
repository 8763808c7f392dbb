import numpy as np
import pytest

from labelspace.analysis import (committee, committee_evaluate, committee_jaccard,
                                 committee_vote, format_histogram, jaccard,
                                 jaccard_histogram, jaccard_per_image,
                                 row_classifier_ranking, row_scores, sweep_csv, sweep_k)
from labelspace.dataset import SyntheticSpec, generate_synthetic, split
from labelspace.embeddings import LabelEmbeddingTable, random_embeddings
from labelspace.evaluation import rank_from_matrix
from labelspace.model import ModelConfig, init_params


@pytest.fixture
def axis_table():
    return LabelEmbeddingTable(("a", "b", "c", "d"), np.eye(4))


def test_row_scores_sum_to_squared_distance(rng):
    table = random_embeddings(25, 6, 3)
    for _ in range(100):
        A = rng.standard_normal((int(rng.integers(1, 6)), 6))
        total = row_scores(A, table).sum(axis=1)
        direct = np.sum((table.vectors @ A.T) ** 2, axis=1)
        np.testing.assert_allclose(total, direct, rtol=1e-12)


def test_row_classifier_ranking(axis_table):
    A = np.array([[3.0, 1.0, 2.0, 0.0],
                  [0.0, 0.0, 5.0, 4.0]])
    assert row_classifier_ranking(A, axis_table, 0).indices.tolist() == [3, 1, 2, 0]
    # row 1 ties labels a and b at zero: lower index first
    assert row_classifier_ranking(A, axis_table, 1).indices.tolist() == [0, 1, 3, 2]
    with pytest.raises(IndexError):
        row_classifier_ranking(A, axis_table, 2)


def test_single_row_vote_equals_full_ranking(rng):
    table = random_embeddings(20, 5, 1)
    for _ in range(50):
        A = rng.standard_normal((1, 5))
        full = rank_from_matrix(A, table)
        for n_top in (1, 3, 7):
            for k_pred in (1, 3, 5):
                assert committee_vote(A, table, n_top, k_pred) == set(full.top(k_pred))


def test_vote_counts_and_tie_break(axis_table):
    # row tops (n_top=2): row0 -> {d, b}, row1 -> {a, b}, row2 -> {c, d}
    A = np.array([[3.0, 1.0, 2.0, 0.0],
                  [0.0, 1.0, 5.0, 4.0],
                  [9.0, 8.0, 0.0, 1.0]])
    result = committee(A, axis_table, n_top=2, k_pred=2, jaccard_n=2)
    assert result.votes.tolist() == [1, 2, 1, 2]
    assert result.prediction == {1, 3}
    # one more slot: a, c have one vote each; mean ranks a=(3+0+3)/3, c=(2+3+0)/3
    assert committee_vote(A, axis_table, 2, 3) == {1, 2, 3}
    assert result.mean_jaccard == pytest.approx((1 / 3 + 1 / 3 + 0) / 3)


def test_vote_argument_checks(axis_table):
    A = np.eye(4)[:2]
    for n_top, k_pred in ((0, 1), (5, 1), (1, 0), (1, 5)):
        with pytest.raises(ValueError):
            committee_vote(A, axis_table, n_top, k_pred)


def test_jaccard():
    assert jaccard({1, 2}, {2, 3}) == pytest.approx(1 / 3)
    assert jaccard({1}, {1}) == 1.0
    assert jaccard(set(), set()) == 1.0
    assert jaccard({1}, {2}) == 0.0


def test_committee_jaccard_pairs(axis_table):
    A = np.array([[0.0, 0.0, 1.0, 1.0],
                  [0.0, 1.0, 0.0, 1.0],
                  [0.0, 0.0, 1.0, 1.0]])
    mean, pairs = committee_jaccard(A, axis_table, 2)
    assert pairs == pytest.approx([1 / 3, 1.0, 1 / 3])
    assert mean == pytest.approx(5 / 9)
    with pytest.raises(ValueError):
        committee_jaccard(A[:1], axis_table, 2)


def test_histogram():
    centers, counts = jaccard_histogram([0.0, 0.01, 0.5, 1.0, 1.0], bins=20)
    assert len(centers) == 20
    assert centers[0] == pytest.approx(0.025)
    assert counts.sum() == 5
    assert counts[0] == 2 and counts[10] == 1 and counts[-1] == 2
    text = format_histogram(centers, counts)
    assert text.splitlines()[0] == "0.025 2"


@pytest.fixture(scope="module")
def small_split():
    ds, table, _ = generate_synthetic(SyntheticSpec(num_labels=12, d=5, f=4,
                                                    num_instances=80, seed=4))
    return split(ds, 0.75, 0) + (table,)


def test_committee_evaluate_threads(small_split):
    _, test, table = small_split
    params = init_params(ModelConfig(4, (), 3, 5, 1.0), 0)
    a = committee_evaluate(params, test, table, 2, 3)
    b = committee_evaluate(params, test, table, 2, 3, threads=3)
    assert a.summary() == b.summary()
    per_image = jaccard_per_image(params, test, table, 3)
    assert per_image.shape == (len(test),)
    assert np.all((0 <= per_image) & (per_image <= 1))


def test_sweep_uses_same_seed(small_split):
    train_set, test, table = small_split
    cfg = ModelConfig(4, (), 1, 5)
    rows = sweep_k(train_set, test, table, [2, 3], cfg, epochs=2, seed=5)
    again = sweep_k(train_set, test, table, [3], cfg, epochs=2, seed=5, threads=2)
    assert [r.k for r in rows] == [2, 3]
    assert rows[1].metrics.summary() == again[0].metrics.summary()
    assert rows[1].final_loss == again[0].final_loss
    text = sweep_csv(rows)
    assert text.splitlines()[0] == "k,C-P,C-R,C-F1,O-P,O-R,O-F1,final_loss"
    assert len(text.splitlines()) == 3
    with pytest.raises(ValueError):
        sweep_k(train_set, test, table, [], cfg)
