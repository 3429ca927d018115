"""Test-time metrics over the three evaluation regimes.

Regimes: clean (original comments only), comprehensive (one comment per
category plus a mixed random tail), and specific attack (k comments of
one attack category in the trailing slots). Fake is the positive class;
a probability strictly above 0.5 predicts fake, ties predict real.
"""

import csv
from dataclasses import dataclass, replace
from pathlib import Path

from . import cnav
from .corpus import (
    ATTACK_CATEGORIES,
    CommentCategory,
    DatasetError,
    NewsItem,
    _sample_comments,
    attack_rank,
    build_test_bundle,
)
from .rng import derive_rng


@dataclass(frozen=True)
class Regime:
    kind: str
    category: CommentCategory | None = None
    attack_count: int | None = None

    def __post_init__(self):
        if self.kind not in ("clean", "comprehensive", "specific"):
            raise ValueError(f"unknown regime kind {self.kind!r}")
        if self.kind == "specific":
            if self.category not in ATTACK_CATEGORIES:
                raise ValueError(f"specific regime needs an attack category, got {self.category}")
            if self.attack_count is None or self.attack_count < 0:
                raise ValueError(f"specific regime needs attack_count >= 0, got {self.attack_count}")
        elif self.category is not None or self.attack_count is not None:
            raise ValueError(f"{self.kind} regime takes no category or count")

    def label(self) -> str:
        if self.kind == "specific":
            return f"specific_{self.category.value}_{self.attack_count}"
        return self.kind


CLEAN = Regime("clean")
COMPREHENSIVE = Regime("comprehensive")


def specific_attack(category: CommentCategory, attack_count: int) -> Regime:
    return Regime("specific", category=category, attack_count=attack_count)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class EvalReport:
    regime: Regime
    counts: ConfusionCounts
    accuracy: float
    f1_real: float
    f1_fake: float
    macro_f1: float
    asr: float | None = None


def _f1(tp: int, fp: int, fn: int) -> float:
    """F1 with the 0/0 convention: no true positives and nothing predicted
    or present positive scores 0."""
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def metrics_from_counts(regime: Regime, counts: ConfusionCounts) -> EvalReport:
    total = counts.total()
    if total == 0:
        raise ValueError("no samples")
    f1_fake = _f1(counts.tp, counts.fp, counts.fn)
    f1_real = _f1(counts.tn, counts.fn, counts.fp)
    return EvalReport(
        regime=regime,
        counts=counts,
        accuracy=(counts.tp + counts.tn) / total,
        f1_real=f1_real,
        f1_fake=f1_fake,
        macro_f1=(f1_real + f1_fake) / 2.0,
    )


def clean_comments(item: NewsItem, m: int):
    """First M original comments in dataset order, cycling when fewer."""
    originals = item.comments_of(CommentCategory.ORIGINAL)
    if not originals:
        raise DatasetError(f"item {item.id!r} has no original comments")
    return [originals[i % len(originals)] for i in range(m)]


def regime_comments(item: NewsItem, regime: Regime, m: int, seed: int):
    """Ordered comment list for one item under a regime."""
    if regime.kind == "clean":
        return clean_comments(item, m)
    if regime.kind == "comprehensive":
        return build_test_bundle(item, m, seed).ordered_comments
    k = regime.attack_count
    if k > m:
        raise DatasetError(f"attack_count {k} exceeds M={m}")
    leading = clean_comments(item, m)[: m - k]
    if k == 0:
        return leading
    pool = item.comments_of(regime.category)
    if not pool:
        raise DatasetError(f"item {item.id!r} has no {regime.category.value} comments")
    rng = derive_rng(seed, "specific", item.id, regime.category.value, k)
    return leading + _sample_comments(pool, k, rng)


def _predict_label(model: cnav.CnavModel, encoder, item: NewsItem, comments) -> int:
    news_vec = encoder.encode(item.text)
    comment_vecs = [encoder.encode(c.text) for c in comments]
    pred = cnav.forward(model, news_vec, comment_vecs)
    return 1 if pred.probability > 0.5 else 0


def evaluate(
    model: cnav.CnavModel,
    encoder,
    items: list[NewsItem],
    regime: Regime,
    m: int,
    seed: int = 0,
) -> EvalReport:
    """Confusion-based metrics over one regime. Deterministic given
    (model, items, regime, m, seed)."""
    if not items:
        raise ValueError("empty item list")
    tp = fp = tn = fn = 0
    for item in items:
        predicted = _predict_label(model, encoder, item, regime_comments(item, regime, m, seed))
        if item.label == 1:
            tp, fn = (tp + 1, fn) if predicted == 1 else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if predicted == 1 else (fp, tn + 1)
    return metrics_from_counts(regime, ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn))


def attack_success_rate(
    model: cnav.CnavModel,
    encoder,
    items: list[NewsItem],
    category: CommentCategory,
    attack_count: int,
    m: int,
    seed: int = 0,
) -> float:
    """Fraction of clean-correct items whose prediction flips under the
    specific attack; 0 when nothing is clean-correct."""
    if attack_count > m:
        raise ValueError(f"attack_count {attack_count} exceeds M={m}")
    regime = specific_attack(category, attack_count)
    correct = [
        item
        for item in items
        if _predict_label(model, encoder, item, clean_comments(item, m)) == item.label
    ]
    if not correct:
        return 0.0
    flips = sum(
        _predict_label(model, encoder, item, regime_comments(item, regime, m, seed)) != item.label
        for item in correct
    )
    return flips / len(correct)


@dataclass(frozen=True)
class SweepRow:
    category: CommentCategory
    attack_count: int
    asr: float


def sweep_attacks(
    model: cnav.CnavModel,
    encoder,
    items: list[NewsItem],
    counts: list[int],
    m: int,
    seed: int = 0,
) -> list[SweepRow]:
    """ASR over the full cross product of attack categories and counts."""
    if not counts:
        raise ValueError("counts must be non-empty")
    rows = []
    for category in sorted(ATTACK_CATEGORIES, key=attack_rank):
        for count in counts:
            asr = attack_success_rate(model, encoder, items, category, count, m, seed)
            rows.append(SweepRow(category=category, attack_count=count, asr=asr))
    return rows


def report_rows(report: EvalReport) -> list[tuple[str, str, str]]:
    """(regime, metric, value) rows; asr appears only when measured."""
    label = report.regime.label()
    rows = [
        (label, "accuracy", repr(report.accuracy)),
        (label, "f1_real", repr(report.f1_real)),
        (label, "f1_fake", repr(report.f1_fake)),
        (label, "macro_f1", repr(report.macro_f1)),
    ]
    if report.asr is not None:
        rows.append((label, "asr", repr(report.asr)))
    return rows


def write_report_csv(reports: list[EvalReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["regime", "metric", "value"])
        for report in reports:
            writer.writerows(report_rows(report))


def write_sweep_csv(rows: list[SweepRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["category", "attack_count", "asr"])
        for row in rows:
            writer.writerow([row.category.value, str(row.attack_count), repr(row.asr)])


def with_asr(report: EvalReport, asr: float) -> EvalReport:
    return replace(report, asr=asr)
