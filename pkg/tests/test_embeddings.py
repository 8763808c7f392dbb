import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from labelspace.embeddings import (LabelEmbeddingTable, load_embeddings, lookup,
                                   random_embeddings, save_embeddings)
from labelspace.exceptions import DataFormatError


def test_load_small_file(tiny_embedding_file):
    table = load_embeddings(tiny_embedding_file)
    assert len(table) == 3
    assert table.dim == 2
    assert table.labels == ("sky", "sun", "dog")


def test_lookup_by_name_and_index(tiny_embedding_file):
    table = load_embeddings(tiny_embedding_file)
    np.testing.assert_array_equal(lookup(table, "sky"), [0.1, 0.2])
    np.testing.assert_array_equal(lookup(table, 2), [0.5, 0.6])
    with pytest.raises(KeyError, match="unicorn"):
        lookup(table, "unicorn")
    with pytest.raises(KeyError):
        lookup(table, 3)


def test_lookup_matches_rows():
    table = random_embeddings(7, 4, seed=3)
    for i, name in enumerate(table.labels):
        np.testing.assert_array_equal(lookup(table, name), table.vectors[i])


@pytest.mark.parametrize("body, lineno, needle", [
    ("2 3\na 1 2 3\nb 1 2\n", 3, "expected 3 components"),
    ("2 3 4\na 1 2 3\nb 1 2 3\n", 1, "header"),
    ("x y\na 1\nb 2\n", 1, "integers"),
    ("2 1\na 1\na 2\n", 3, "duplicate"),
    ("2 1\na 1\nb nan\n", 3, "non-finite"),
    ("2 1\na 1\nb inf\n", 3, "non-finite"),
    ("3 1\na 1\nb 2\n", None, "declares 3 rows"),
])
def test_malformed_files_report_line(tmp_path, body, lineno, needle):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(DataFormatError, match=needle) as info:
        load_embeddings(path)
    if lineno is not None:
        assert info.value.lineno == lineno


def test_trailing_whitespace_tolerated(tmp_path):
    path = tmp_path / "e.txt"
    path.write_text("2 2  \na 1 2   \nb 3 4\t\n\n")
    assert load_embeddings(path).labels == ("a", "b")


def test_vectors_raw_unless_normalize(tiny_embedding_file):
    raw = load_embeddings(tiny_embedding_file)
    np.testing.assert_array_equal(raw.vectors[1], [0.3, 0.4])
    unit = load_embeddings(tiny_embedding_file, normalize=True)
    np.testing.assert_allclose(np.linalg.norm(unit.vectors, axis=1), 1.0)


def test_full_sized_label_space(tmp_path):
    # 81 concepts with 300-dim vectors
    table = random_embeddings(81, 300, seed=1)
    path = tmp_path / "nus.txt"
    save_embeddings(table, path)
    loaded = load_embeddings(path)
    assert (len(loaded), loaded.dim) == (81, 300)


def test_random_embeddings_deterministic_and_unit():
    a = random_embeddings(5, 3, seed=7)
    b = random_embeddings(5, 3, seed=7)
    assert a.vectors.tobytes() == b.vectors.tobytes()
    assert a.labels == b.labels
    np.testing.assert_allclose(np.linalg.norm(a.vectors, axis=1), 1.0, atol=1e-9)
    assert random_embeddings(5, 3, seed=8) != a


@pytest.mark.parametrize("n, d", [(1, 3), (5, 0)])
def test_random_embeddings_preconditions(n, d):
    with pytest.raises(ValueError):
        random_embeddings(n, d, seed=0)


@pytest.mark.parametrize("labels, vectors", [
    (("a",), [[1.0]]),
    (("a", "a"), [[1.0], [2.0]]),
    (("a", "b c"), [[1.0], [2.0]]),
    (("a", "b"), [[1.0], [np.nan]]),
    (("a", "b"), [[1.0]]),
])
def test_table_invariants(labels, vectors):
    with pytest.raises(ValueError):
        LabelEmbeddingTable(labels, np.array(vectors))


def test_table_is_read_only(tiny_table):
    with pytest.raises(ValueError):
        tiny_table.vectors[0, 0] = 1.0


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 12), d=st.integers(1, 8), seed=st.integers(0, 2 ** 32 - 1))
def test_save_load_round_trip(tmp_path_factory, n, d, seed):
    table = random_embeddings(n, d, seed)
    path = tmp_path_factory.mktemp("rt") / "e.txt"
    save_embeddings(table, path)
    assert load_embeddings(path) == table


def test_round_trip_at_declared_precision(tmp_path):
    table = random_embeddings(4, 3, seed=0)
    path = tmp_path / "e.txt"
    save_embeddings(table, path, precision=6)
    loaded = load_embeddings(path)
    np.testing.assert_allclose(loaded.vectors, table.vectors, rtol=1e-5)
    # a second pass at the same precision is exact
    save_embeddings(loaded, tmp_path / "e2.txt", precision=6)
    assert load_embeddings(tmp_path / "e2.txt") == loaded
