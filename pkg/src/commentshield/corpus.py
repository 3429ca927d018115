"""News+comment datasets: loading, validation, statistics, and comment bundles.

The dataset file is line-delimited JSON, one news record per line:

    {"id": ..., "text": ..., "label": 0|1, "split": "train|validation|test",
     "comments": [{"text": ..., "category": ..., "source": ...}, ...]}

Comment categories are "original", "perception", "cognition" and
"socio_emotional". Bundle builders assemble the fixed-length comment
multiset a classifier sees for one news item under a given regime; they
are pure functions of (item, regime parameters, seed).
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .rng import derive_rng

SCHEMA_VERSION = 1

# Slots reserved in every training bundle: one per comment category.
BASE_SLOTS = 4

# Original comments kept at the front of every validation bundle.
NUM_VALIDATION_ORIGINALS = 3


class CommentCategory(Enum):
    ORIGINAL = "original"
    PERCEPTION = "perception"
    COGNITION = "cognition"
    SOCIO_EMOTIONAL = "socio_emotional"


# Canonical order; fixed here because nothing upstream fixes one and all
# mixing logic must be deterministic.
CANONICAL_ORDER = (
    CommentCategory.ORIGINAL,
    CommentCategory.PERCEPTION,
    CommentCategory.COGNITION,
    CommentCategory.SOCIO_EMOTIONAL,
)

ATTACK_CATEGORIES = (
    CommentCategory.PERCEPTION,
    CommentCategory.COGNITION,
    CommentCategory.SOCIO_EMOTIONAL,
)


def attack_rank(category: "CommentCategory") -> int:
    """Position of an attack category in canonical order (ties broken by this)."""
    return ATTACK_CATEGORIES.index(category)


class CommentSource(Enum):
    HUMAN = "human"
    LLM_GENERATED = "llm_generated"
    TEMPLATE_FALLBACK = "template_fallback"


class DatasetError(ValueError):
    """Raised for malformed dataset files or domain violations."""


@dataclass(frozen=True)
class Comment:
    text: str
    category: CommentCategory
    source: CommentSource = CommentSource.HUMAN

    def __post_init__(self):
        if not self.text.strip():
            raise DatasetError("comment text is empty after trimming")

    def to_record(self) -> dict:
        return {
            "text": self.text,
            "category": self.category.value,
            "source": self.source.value,
        }


@dataclass
class NewsItem:
    id: str
    text: str
    label: int
    comments: list[Comment] = field(default_factory=list)

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DatasetError(f"item {self.id!r}: label must be 0 or 1, got {self.label!r}")

    def comments_of(self, category: CommentCategory) -> list[Comment]:
        return [c for c in self.comments if c.category == category]

    def to_record(self, split: str) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "label": self.label,
            "split": split,
            "comments": [c.to_record() for c in self.comments],
        }


@dataclass
class DatasetSplit:
    train: list[NewsItem] = field(default_factory=list)
    validation: list[NewsItem] = field(default_factory=list)
    test: list[NewsItem] = field(default_factory=list)

    def all_items(self) -> list[NewsItem]:
        return self.train + self.validation + self.test


@dataclass
class CommentBundle:
    news_id: str
    ordered_comments: list[Comment]

    def category_counts(self) -> dict[CommentCategory, int]:
        counts = {cat: 0 for cat in CANONICAL_ORDER}
        for c in self.ordered_comments:
            counts[c.category] += 1
        return counts


_SPLIT_NAMES = ("train", "validation", "test")


def _parse_comment(raw: dict, where: str) -> Comment:
    if not isinstance(raw, dict):
        raise DatasetError(f"{where}: comment is not an object")
    for key in ("text", "category", "source"):
        if key not in raw:
            raise DatasetError(f"{where}: comment missing field {key!r}")
    try:
        category = CommentCategory(raw["category"])
    except ValueError:
        raise DatasetError(f"{where}: unknown comment category {raw['category']!r}") from None
    try:
        source = CommentSource(raw["source"])
    except ValueError:
        raise DatasetError(f"{where}: unknown comment source {raw['source']!r}") from None
    if not isinstance(raw["text"], str) or not raw["text"].strip():
        raise DatasetError(f"{where}: comment text is empty")
    return Comment(text=raw["text"], category=category, source=source)


def load_dataset(path: str | Path, schema_version: int = SCHEMA_VERSION) -> DatasetSplit:
    """Load and validate a line-delimited dataset file into splits.

    Raises DatasetError on malformed records (with line number), duplicate
    ids, bad labels, or an unsupported schema version; an empty file is an
    error because there is nothing to train or evaluate on.
    """
    if schema_version != SCHEMA_VERSION:
        raise DatasetError(f"unsupported schema version {schema_version} (expected {SCHEMA_VERSION})")
    path = Path(path)
    split = DatasetSplit()
    seen_ids: set[str] = set()
    n_records = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path.name}:{lineno}"
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(raw, dict):
                raise DatasetError(f"{where}: record is not an object")
            for key in ("id", "text", "label", "comments", "split"):
                if key not in raw:
                    raise DatasetError(f"{where}: missing field {key!r}")
            item_id = raw["id"]
            if not isinstance(item_id, str) or not item_id:
                raise DatasetError(f"{where}: id must be a non-empty string")
            if item_id in seen_ids:
                raise DatasetError(f"{where}: duplicate id {item_id!r}")
            seen_ids.add(item_id)
            if raw["label"] not in (0, 1):
                raise DatasetError(f"{where}: invalid label {raw['label']!r} (must be 0 or 1)")
            if raw["split"] not in _SPLIT_NAMES:
                raise DatasetError(f"{where}: unknown split {raw['split']!r}")
            if not isinstance(raw["comments"], list):
                raise DatasetError(f"{where}: comments must be an array")
            comments = [_parse_comment(c, where) for c in raw["comments"]]
            item = NewsItem(id=item_id, text=raw["text"], label=raw["label"], comments=comments)
            getattr(split, raw["split"]).append(item)
            n_records += 1
    if n_records == 0:
        raise DatasetError(f"{path}: no records")
    return split


def write_dataset(split: DatasetSplit, path: str | Path) -> None:
    """Write splits back in the line-delimited file format (UTF-8, LF)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for split_name in _SPLIT_NAMES:
            for item in getattr(split, split_name):
                fh.write(json.dumps(item.to_record(split_name), ensure_ascii=False))
                fh.write("\n")


def split_statistics(split: DatasetSplit) -> dict:
    """Per-split piece and comment counts broken down by veracity."""
    stats: dict = {}
    for split_name in _SPLIT_NAMES:
        items = getattr(split, split_name)
        entry: dict = {}
        for label_name, label in (("fake", 1), ("real", 0)):
            members = [it for it in items if it.label == label]
            entry[label_name] = {
                "pieces": len(members),
                "comments": sum(len(it.comments) for it in members),
            }
        entry["total"] = {
            "pieces": len(items),
            "comments": sum(len(it.comments) for it in items),
        }
        stats[split_name] = entry
    return stats


def _sample_comments(pool: list[Comment], k: int, rng) -> list[Comment]:
    """Seeded selection of k comments: without replacement when the pool
    is large enough, with replacement otherwise."""
    if k <= 0:
        return []
    if not pool:
        raise DatasetError("cannot sample from an empty comment pool")
    if k <= len(pool):
        return rng.sample(pool, k)
    return [rng.choice(pool) for _ in range(k)]


def build_validation_bundle(
    item: NewsItem, attack: CommentCategory, m: int, seed: int
) -> CommentBundle:
    """Targeted-attack validation bundle: the item's first three original
    comments followed by M-3 comments of the attack category.

    The originals are taken positionally (not sampled) so vulnerability
    measurements are stable across epochs; the attack slots are a seeded
    sample without replacement from the item's attack-category comments.
    """
    if attack == CommentCategory.ORIGINAL:
        raise DatasetError("validation bundles target an attack category, not originals")
    originals = item.comments_of(CommentCategory.ORIGINAL)
    if len(originals) < NUM_VALIDATION_ORIGINALS:
        raise DatasetError(
            f"item {item.id!r}: needs >= {NUM_VALIDATION_ORIGINALS} original comments, "
            f"has {len(originals)}"
        )
    if m < NUM_VALIDATION_ORIGINALS:
        raise DatasetError(f"M={m} is below the {NUM_VALIDATION_ORIGINALS} reserved original slots")
    n_attack = m - NUM_VALIDATION_ORIGINALS
    pool = item.comments_of(attack)
    if len(pool) < n_attack:
        raise DatasetError(
            f"item {item.id!r}: needs >= {n_attack} {attack.value} comments, has {len(pool)}"
        )
    rng = derive_rng(seed, "validation", item.id, attack.value)
    chosen = rng.sample(pool, n_attack) if n_attack else []
    return CommentBundle(item.id, originals[:NUM_VALIDATION_ORIGINALS] + chosen)


def build_test_bundle(item: NewsItem, m: int, seed: int) -> CommentBundle:
    """Mixed test bundle: one comment per category in canonical order in
    the first four slots, then M-4 slots drawn uniformly over the four
    categories (comment then chosen uniformly within the category)."""
    if m < BASE_SLOTS:
        raise DatasetError(f"M={m} is below the {BASE_SLOTS} per-category slots")
    pools = {cat: item.comments_of(cat) for cat in CANONICAL_ORDER}
    for cat in CANONICAL_ORDER:
        if not pools[cat]:
            raise DatasetError(f"item {item.id!r}: no {cat.value} comments for the mixed test bundle")
    rng = derive_rng(seed, "test", item.id)
    ordered = [rng.choice(pools[cat]) for cat in CANONICAL_ORDER]
    for _ in range(m - BASE_SLOTS):
        cat = rng.choice(CANONICAL_ORDER)
        ordered.append(rng.choice(pools[cat]))
    return CommentBundle(item.id, ordered)


def build_training_bundle(
    item: NewsItem, plan, m: int, seed: int
) -> CommentBundle:
    """Training bundle under an allocation plan.

    Layout: one base slot per category in canonical order, then each attack
    category's quota block, then any residual slots filled with original
    comments. A category with no comments on this item (e.g. after an
    ablation) donates its base slot and quota to the originals. Total
    length is exactly M.
    """
    if m < BASE_SLOTS:
        raise DatasetError(f"M={m} is below the {BASE_SLOTS} base slots")
    quotas = {cat: int(plan.quota.get(cat, 0)) for cat in ATTACK_CATEGORIES}
    if BASE_SLOTS + sum(quotas.values()) > m:
        raise DatasetError(
            f"plan quotas {sum(quotas.values())} plus {BASE_SLOTS} base slots exceed M={m}"
        )
    originals = item.comments_of(CommentCategory.ORIGINAL)
    if not originals:
        raise DatasetError(f"item {item.id!r}: training bundles need at least one original comment")
    pools = {cat: item.comments_of(cat) for cat in ATTACK_CATEGORIES}

    rng = derive_rng(seed, "training", item.id)
    donated = 0
    ordered = _sample_comments(originals, 1, rng)
    for cat in ATTACK_CATEGORIES:
        if pools[cat]:
            ordered.extend(_sample_comments(pools[cat], 1, rng))
        else:
            donated += 1
    for cat in ATTACK_CATEGORIES:
        if pools[cat]:
            ordered.extend(_sample_comments(pools[cat], quotas[cat], rng))
        else:
            donated += quotas[cat]
    residual = m - BASE_SLOTS - sum(quotas.values())
    ordered.extend(_sample_comments(originals, donated + residual, rng))
    return CommentBundle(item.id, ordered)
