import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def tiny_corpus():
    """Six 16x16 pairs, enough to drive the trainer and CLI quickly."""
    from hazegan.haze import generate_toy_corpus

    samples = generate_toy_corpus(6, (16, 16), 3)
    hazy = np.stack([s.hazy for s in samples])
    clear = np.stack([s.clear for s in samples])
    return hazy, clear


@pytest.fixture(scope="session")
def small_corpus():
    """Twenty 32x32 pairs for short training-behavior tests."""
    from hazegan.haze import generate_toy_corpus

    samples = generate_toy_corpus(20, (32, 32), 5)
    hazy = np.stack([s.hazy for s in samples])
    clear = np.stack([s.clear for s in samples])
    return hazy, clear


@pytest.fixture(scope="session")
def gradcheck_reports():
    from hazegan.train import gradcheck_all

    return gradcheck_all(seed=0)
