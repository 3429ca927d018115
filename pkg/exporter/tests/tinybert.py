"""Deterministic miniature BERT checkpoint built locally for offline tests."""

from pathlib import Path

import torch
from transformers import BertConfig, BertModel, BertTokenizer

HIDDEN = 16
SEED = 7

VOCAB = (
    ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    + list("abcdefghijklmnopqrstuvwxyz")
    + ["##" + ch for ch in "abcdefghijklmnopqrstuvwxyz"]
    + list("0123456789")
    + ["##" + ch for ch in "0123456789"]
    + [".", ",", "!", "?", "'", "-"]
    + ["the", "officials", "situation", "news", "comment", "report"]
)


def build(path: str | Path, seed: int = SEED) -> Path:
    """Create and save a one-layer BERT with a character-level vocabulary.

    Weights are seeded, so rebuilding with the same torch version gives
    the same checkpoint.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    vocab_file = path / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")

    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=HIDDEN,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=64,
    )
    torch.manual_seed(seed)
    model = BertModel(config)
    model.eval()
    model.save_pretrained(path)
    BertTokenizer(str(vocab_file)).save_pretrained(path)
    return path
