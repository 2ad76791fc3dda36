import numpy as np
import pytest
import torch


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly initialized masked-LM checkpoint saved to disk.

    Extraction only needs a loadable checkpoint; weights are random but fixed
    by seed, which is all the determinism tests require.
    """
    from transformers import BertConfig, BertForMaskedLM, BertTokenizer

    root = tmp_path_factory.mktemp("model")
    words = [f"tok{i}" for i in range(1995)]
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + words
    vocab_file = root / "base_vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n", encoding="utf-8")

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=128,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=256,
        max_position_embeddings=64,
    )
    torch.manual_seed(0)
    model = BertForMaskedLM(config)
    tokenizer = BertTokenizer(str(vocab_file))
    model_dir = root / "checkpoint"
    model.save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    return str(model_dir), words


@pytest.fixture(scope="session")
def bilingual_sample(tmp_path_factory, tiny_model_dir):
    """100 sentences (50 per language) drawn from the model vocabulary."""
    _, words = tiny_model_dir
    rng = np.random.default_rng(99)
    root = tmp_path_factory.mktemp("text")
    paths = {}
    for lang, lo, hi in (("en", 0, 900), ("de", 900, 1800)):
        lines = [
            " ".join(rng.choice(words[lo:hi], size=int(rng.integers(4, 12))))
            for _ in range(50)
        ]
        path = root / f"{lang}.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths[lang] = str(path)
    return paths
