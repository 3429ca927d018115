"""Export transformer token embeddings for a comment dataset.

Reads the line-delimited dataset format (one JSON object per news item,
each with a text and a list of comments), runs a pretrained encoder over
every distinct text, and writes the CEMB binary format the detector's
embedding loader consumes: magic "CEMB", u32 version 1, u32 dim, u64
entry count, then per entry a u64 FNV-1a hash of the UTF-8 text, u32 T,
and T*dim little-endian float32 values. Entries are sorted by hash so
repeated exports are byte-identical.

Token-level sequences (not pooled vectors) are exported so downstream
attention operates on real token structure. Only inference is supported;
the encoder is never fine-tuned here.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

MAGIC = b"CEMB"
VERSION = 1
DEFAULT_MAX_LEN = 64

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


class ExportError(ValueError):
    """Invalid job, dataset, or output state."""


class CollisionError(ExportError):
    """Two distinct texts hash to the same 64-bit key."""


def fnv1a_64(text: str) -> int:
    """64-bit FNV-1a over the UTF-8 encoding of the text."""
    value = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        value = ((value ^ byte) * _FNV_PRIME) & _MASK
    return value


@dataclass(frozen=True)
class ExportJob:
    dataset: Path
    model_id: str
    output: Path
    max_len: int = DEFAULT_MAX_LEN
    batch_size: int = 8

    def __post_init__(self):
        if self.max_len < 1:
            raise ExportError(f"max_len must be >= 1, got {self.max_len}")
        if self.batch_size < 1:
            raise ExportError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.model_id:
            raise ExportError("model_id is empty")


@dataclass(frozen=True)
class ExportSummary:
    texts: int
    dim: int
    file_size: int


def collect_texts(path: str | Path) -> list[str]:
    """Distinct news and comment texts in first-seen order.

    Light schema validation only: each line must be a JSON object with
    id, text, label, split, and a comments list whose members carry a
    text field. Errors name the offending line.
    """
    texts: list[str] = []
    seen: set[str] = set()

    def add(text, lineno, what):
        if not isinstance(text, str) or not text.strip():
            raise ExportError(f"{path}:{lineno}: {what} text must be a non-empty string")
        if text not in seen:
            seen.add(text)
            texts.append(text)

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            for key in ("id", "text", "label", "split", "comments"):
                if key not in record:
                    raise ExportError(f"{path}:{lineno}: missing key {key!r}")
            add(record["text"], lineno, "news")
            if not isinstance(record["comments"], list):
                raise ExportError(f"{path}:{lineno}: comments must be a list")
            for comment in record["comments"]:
                if not isinstance(comment, dict) or "text" not in comment:
                    raise ExportError(f"{path}:{lineno}: comment without a text field")
                add(comment["text"], lineno, "comment")
    return texts


def hash_texts(texts: list[str]) -> dict[int, str]:
    """Key every text by its hash; abort naming both texts on collision."""
    keyed: dict[int, str] = {}
    for text in texts:
        key = fnv1a_64(text)
        other = keyed.get(key)
        if other is not None and other != text:
            raise CollisionError(
                f"hash collision {key:#018x}: {other!r} vs {text!r}"
            )
        keyed[key] = text
    return keyed


def load_encoder(model_id: str):
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ExportError(f"cannot load encoder {model_id!r}: {exc}") from exc
    model.eval()
    return tokenizer, model


def encode_texts(tokenizer, model, texts, max_len: int, batch_size: int) -> list[np.ndarray]:
    """Token-level hidden states per text, truncated to max_len.

    Padding positions are stripped via the attention mask, so every
    returned array is (T_i, dim) float32 with 1 <= T_i <= max_len.
    """
    sequences: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            chunk = texts[start : start + batch_size]
            batch = tokenizer(
                chunk,
                return_tensors="pt",
                padding=True,
                truncation=True,
                max_length=max_len,
            )
            hidden = model(**batch).last_hidden_state
            lengths = batch["attention_mask"].sum(dim=1)
            for row, t in zip(hidden, lengths):
                sequences.append(row[: int(t)].to(torch.float32).cpu().numpy())
    return sequences


def write_cemb(path: str | Path, dim: int, entries: dict[int, np.ndarray]) -> int:
    """Write entries sorted by hash; returns the file size in bytes."""
    parts = [MAGIC, struct.pack("<IIQ", VERSION, dim, len(entries))]
    for key in sorted(entries):
        seq = np.ascontiguousarray(entries[key], dtype="<f4")
        if seq.ndim != 2 or seq.shape[1] != dim:
            raise ExportError(f"entry {key:#x} has shape {seq.shape}, expected (T, {dim})")
        parts.append(struct.pack("<QI", key, seq.shape[0]))
        parts.append(seq.tobytes())
    data = b"".join(parts)
    Path(path).write_bytes(data)
    return len(data)


def export(job: ExportJob) -> ExportSummary:
    """Run the full pipeline: collect, hash, encode, write."""
    texts = collect_texts(job.dataset)
    keyed = hash_texts(texts)
    tokenizer, model = load_encoder(job.model_id)
    dim = int(model.config.hidden_size)
    sequences = encode_texts(tokenizer, model, texts, job.max_len, job.batch_size)
    entries = {fnv1a_64(text): seq for text, seq in zip(texts, sequences)}
    assert len(entries) == len(keyed)
    size = write_cemb(job.output, dim, entries)
    return ExportSummary(texts=len(texts), dim=dim, file_size=size)
