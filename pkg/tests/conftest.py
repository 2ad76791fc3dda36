import numpy as np
import pytest

from langshift import EmbeddingDataset, SentenceRecord


def make_dataset(
    rng: np.random.Generator,
    n_sentences: int,
    dim: int,
    languages: list[str] | str = "aa",
    layer: int = 8,
    max_len: int = 10,
    id_range: int = 1000,
) -> EmbeddingDataset:
    """Random dataset; sentence i gets language languages[i % len(languages)]."""
    if isinstance(languages, str):
        languages = [languages]
    sentences = []
    for i in range(n_sentences):
        n_tokens = int(rng.integers(1, max_len + 1))
        sentences.append(
            SentenceRecord(
                token_ids=rng.integers(0, id_range, size=n_tokens).astype(np.uint32),
                vectors=rng.normal(size=(n_tokens, dim)).astype(np.float32),
                language=languages[i % len(languages)],
            )
        )
    return EmbeddingDataset(layer=layer, dim=dim, sentences=tuple(sentences))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
