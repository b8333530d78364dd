import numpy as np
import pytest

from evoloop import HashEmbedder, KnowledgeGraph, MemoryIndex


@pytest.fixture
def graph():
    return KnowledgeGraph()


@pytest.fixture
def embedder():
    return HashEmbedder(dimension=64, seed=0)


@pytest.fixture
def indexed(graph, embedder):
    """Graph plus an index over it, sharing the embedder's dimension."""
    return graph, MemoryIndex(graph, dimension=64), embedder


def unit_vector(dimension: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dimension)
    return v / np.linalg.norm(v)


@pytest.fixture
def fast_config():
    from evoloop import EngineConfig

    return EngineConfig(iterations=4, pool_size=40)
