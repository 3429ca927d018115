"""Rebuild the embedding round-trip fixture committed in the main repo.

Builds the deterministic miniature encoder the exporter tests use, runs a
real export over a three-text dataset, and writes minibert.cemb plus a
JSON sidecar (file checksum, texts, per-entry shapes and checksums) into
the detector's tests/fixtures/ directory. The committed pair lets the
detector verify a genuinely exported file without installing this
package. Checksums change only if the encoder weights change, which is
pinned by the build seed and the torch version.

Run from the repo root:  python3 exporter/scripts/make_primary_fixture.py
"""

import hashlib
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import tinybert  # noqa: E402
from cembexport.export import ExportJob, export, fnv1a_64, load_encoder, encode_texts  # noqa: E402

REPO_ROOT = Path(__file__).resolve().parents[2]
FIXTURE_DIR = REPO_ROOT / "tests" / "fixtures"
MAX_LEN = 12

TEXTS = [
    "officials confirm the reservoir level dropped",
    "this is fake news, do not trust it",
    "the report matches earlier filings",
]


def main() -> int:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        model_dir = tinybert.build(tmp_path / "tinybert")

        dataset = tmp_path / "fixture.jsonl"
        record = {
            "id": "n0",
            "text": TEXTS[0],
            "label": 0,
            "split": "train",
            "comments": [{"text": t, "category": "original"} for t in TEXTS[1:]],
        }
        dataset.write_text(json.dumps(record) + "\n", encoding="utf-8")

        cemb_path = FIXTURE_DIR / "minibert.cemb"
        summary = export(ExportJob(dataset, str(model_dir), cemb_path, max_len=MAX_LEN))

        tokenizer, model = load_encoder(str(model_dir))
        sequences = encode_texts(tokenizer, model, TEXTS, MAX_LEN, batch_size=8)

    meta = {
        "dim": summary.dim,
        "max_len": MAX_LEN,
        "encoder": f"one-layer BERT, hidden {tinybert.HIDDEN}, build seed {tinybert.SEED}",
        "sha256": hashlib.sha256(cemb_path.read_bytes()).hexdigest(),
        "texts": TEXTS,
        "entries": [
            {
                "hash": f"{fnv1a_64(text):#018x}",
                "shape": list(seq.shape),
                "sha256": hashlib.sha256(seq.tobytes()).hexdigest(),
            }
            for text, seq in zip(TEXTS, sequences)
        ],
    }
    meta_path = FIXTURE_DIR / "minibert.json"
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {cemb_path} ({summary.file_size} bytes) and {meta_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
