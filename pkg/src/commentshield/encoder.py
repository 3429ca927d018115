"""Text-to-vector encoders.

Two interchangeable paths feed the classifier:

* a built-in seeded sign-hash featurizer (self-contained, desk-scale), and
* a loader for precomputed token embeddings exported by the companion
  exporter tool.

Both produce a TokenSequence: a T x d float32 matrix, one row per token.

Binary embedding format (little-endian): magic "CEMB", u32 version=1,
u32 dim, u64 entry count; per entry: u64 FNV-1a hash of the UTF-8 text,
u32 T, then T*dim IEEE-754 float32 values.
"""

import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import derive_seed

CEMB_MAGIC = b"CEMB"
CEMB_VERSION = 1

DEFAULT_MAX_TOKENS = 64

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class EmbeddingFormatError(ValueError):
    """Raised when an embedding file does not match the binary format."""


def fnv1a_64(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 encoding of text."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass
class TokenSequence:
    vectors: np.ndarray  # (T, d) float32
    text_id: str | None = None


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens (runs of word characters)."""
    return _TOKEN_RE.findall(text.lower())


def _token_signs(token: str, d: int, seed: int) -> np.ndarray:
    """Deterministic dense +-1 pattern for one token.

    Sign bits come from SHA-256 of (seed, token), extended with a block
    counter when d exceeds one digest. Distinct tokens share a full
    pattern with probability 2**-d.
    """
    bits_needed = d
    chunks = []
    block = 0
    while bits_needed > 0:
        digest = hashlib.sha256(f"{seed}\x1f{token}\x1f{block}".encode("utf-8")).digest()
        chunks.append(np.frombuffer(digest, dtype=np.uint8))
        bits_needed -= 256
        block += 1
    all_bits = np.unpackbits(np.concatenate(chunks))[:d]
    return all_bits.astype(np.float32) * 2.0 - 1.0


def hash_featurize(
    text: str, d: int, seed: int, max_tokens: int = DEFAULT_MAX_TOKENS
) -> TokenSequence:
    """Map a text to a T x d matrix of per-token sign vectors.

    Each token becomes a dense vector of d entries of magnitude 1/sqrt(d)
    with hash-derived signs, so every row has exact unit norm. Token rows
    depend only on the token identity (and d, seed): two texts differing
    in one token differ in exactly that row. Sequences are truncated to
    max_tokens.
    """
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    tokens = tokenize(text)
    if not tokens:
        raise ValueError("cannot featurize empty text")
    tokens = tokens[:max_tokens]
    scale = np.float32(1.0 / np.sqrt(d))
    rows = [_token_signs(tok, d, seed) * scale for tok in tokens]
    return TokenSequence(vectors=np.stack(rows).astype(np.float32))


@dataclass
class EmbeddingStore:
    dim: int
    entries: dict[int, np.ndarray]  # text hash -> (T, dim) float32

    def lookup(self, text: str) -> np.ndarray:
        key = fnv1a_64(text)
        if key not in self.entries:
            raise KeyError(f"no embedding for text starting {text[:40]!r}")
        return self.entries[key]


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Load a CEMB file into an EmbeddingStore. Fails on magic/version
    mismatch or truncation."""
    data = Path(path).read_bytes()
    if len(data) < 20:
        raise EmbeddingFormatError("truncated file: header incomplete")
    if data[:4] != CEMB_MAGIC:
        raise EmbeddingFormatError(f"magic mismatch: {data[:4]!r}")
    version, dim = struct.unpack_from("<II", data, 4)
    if version != CEMB_VERSION:
        raise EmbeddingFormatError(f"unsupported version {version}")
    (count,) = struct.unpack_from("<Q", data, 12)
    offset = 20
    entries: dict[int, np.ndarray] = {}
    for _ in range(count):
        if offset + 12 > len(data):
            raise EmbeddingFormatError("truncated file: entry header incomplete")
        text_hash, t = struct.unpack_from("<QI", data, offset)
        offset += 12
        nbytes = t * dim * 4
        if offset + nbytes > len(data):
            raise EmbeddingFormatError("truncated file: entry payload incomplete")
        vectors = np.frombuffer(data, dtype="<f4", count=t * dim, offset=offset)
        entries[text_hash] = vectors.reshape(t, dim).copy()
        offset += nbytes
    if offset != len(data):
        raise EmbeddingFormatError(f"{len(data) - offset} trailing bytes after last entry")
    return EmbeddingStore(dim=dim, entries=entries)


def write_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    """Write an EmbeddingStore in the CEMB format, entries sorted by hash."""
    with Path(path).open("wb") as fh:
        fh.write(CEMB_MAGIC)
        fh.write(struct.pack("<IIQ", CEMB_VERSION, store.dim, len(store.entries)))
        for text_hash in sorted(store.entries):
            vectors = np.ascontiguousarray(store.entries[text_hash], dtype="<f4")
            if vectors.ndim != 2 or vectors.shape[1] != store.dim:
                raise EmbeddingFormatError(
                    f"entry {text_hash:#x} has shape {vectors.shape}, dim {store.dim} expected"
                )
            fh.write(struct.pack("<QI", text_hash, vectors.shape[0]))
            fh.write(vectors.tobytes())


class HashingEncoder:
    """Encoder backed by the built-in sign-hash featurizer."""

    def __init__(self, dim: int, seed: int, max_tokens: int = DEFAULT_MAX_TOKENS):
        self.dim = dim
        self.seed = derive_seed(seed, "featurizer")
        self.max_tokens = max_tokens
        self._cache: dict[str, np.ndarray] = {}

    def encode(self, text: str) -> np.ndarray:
        vectors = self._cache.get(text)
        if vectors is None:
            vectors = hash_featurize(text, self.dim, self.seed, self.max_tokens).vectors
            self._cache[text] = vectors
        return vectors


class PrecomputedEncoder:
    """Encoder serving token sequences from a loaded embedding store."""

    def __init__(self, store: EmbeddingStore):
        self.dim = store.dim
        self.store = store

    def encode(self, text: str) -> np.ndarray:
        return self.store.lookup(text)
