import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from phishtrain.corpus import synth_corpus  # noqa: E402


@pytest.fixture(scope="session")
def small_corpus():
    """72 base emails x 4 variants with clustered embeddings: the smallest
    corpus that satisfies the 60-trial protocol with headroom."""
    records, table = synth_corpus(seed=11, n_base=72, n_clusters=12)
    return records, table
