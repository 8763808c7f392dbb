import numpy as np
import pytest

from labelspace.embeddings import LabelEmbeddingTable

# lines collected by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_table():
    return LabelEmbeddingTable(("sky", "sun", "dog"),
                               np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]))


@pytest.fixture
def tiny_embedding_file(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("3 2\nsky 0.1 0.2\nsun 0.3 0.4\ndog 0.5 0.6\n")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
