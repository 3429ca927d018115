import pytest

import synth


@pytest.fixture(scope="session")
def robust_data():
    """The 200-item robustness corpus, built once per session."""
    return synth.robustness_corpus()


@pytest.fixture(scope="session")
def small_data():
    """A 40-item slice of the same world for fast training tests."""
    return synth.robustness_corpus(n=40)
