"""Adversarial training loop.

Each epoch shuffles the train split, assembles one M-comment bundle per
item under the current allocation plan, and runs mini-batch Adam. After
the epoch the allocation mechanism may recompute the plan (gated on the
epoch-mean loss); the new plan takes effect from the next epoch. Ablation
flags drop attack categories from the corpus or freeze the plan entirely.
"""

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import cnav, ida
from .corpus import (
    ATTACK_CATEGORIES,
    CommentCategory,
    DatasetSplit,
    NewsItem,
    build_training_bundle,
)
from .rng import derive_rng, derive_seed

ABLATION_FLAGS = frozenset(
    {"disable_ida", "drop_perception", "drop_cognition", "drop_socioemotional"}
)

_DROP_FLAGS = {
    "drop_perception": CommentCategory.PERCEPTION,
    "drop_cognition": CommentCategory.COGNITION,
    "drop_socioemotional": CommentCategory.SOCIO_EMOTIONAL,
}


@dataclass(frozen=True)
class TrainConfig:
    m: int
    epochs: int = 6
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    ablation: frozenset = frozenset()

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.m < 4:
            raise ValueError(f"M must be >= 4, got {self.m}")
        unknown = set(self.ablation) - ABLATION_FLAGS
        if unknown:
            raise ValueError(f"unknown ablation flags: {sorted(unknown)}")


@dataclass
class EpochRecord:
    epoch: int
    mean_train_loss: float
    plan: ida.AllocationPlan
    val_accuracy: dict[CommentCategory, float] = field(default_factory=dict)
    wall_time: float = 0.0
    ida_record: ida.IdaEpochRecord | None = None


def dropped_categories(flags) -> set[CommentCategory]:
    return {_DROP_FLAGS[f] for f in flags if f in _DROP_FLAGS}


def apply_ablation(data: DatasetSplit, flags) -> DatasetSplit:
    """Remove every comment of each dropped attack category from every
    item in every split. No drop flags: identity."""
    dropped = dropped_categories(flags)
    if not dropped:
        return data

    def strip(items: list[NewsItem]) -> list[NewsItem]:
        return [
            replace(item, comments=[c for c in item.comments if c.category not in dropped])
            for item in items
        ]

    return DatasetSplit(
        train=strip(data.train),
        validation=strip(data.validation),
        test=strip(data.test),
    )


def train(
    data: DatasetSplit,
    cfg: TrainConfig,
    model_cfg: cnav.CnavConfig,
    encoder,
) -> tuple[cnav.CnavModel, list[EpochRecord]]:
    """Run the full loop and return the final model plus per-epoch records.

    Deterministic for a fixed (data, cfg, model_cfg): all randomness flows
    from cfg.seed through named streams. The plan recorded for an epoch is
    the one its bundles were built with; plan updates computed after the
    epoch apply from the next one.
    """
    if not data.train:
        raise ValueError("empty train split")
    if cfg.m != model_cfg.m:
        raise ValueError(f"TrainConfig.m={cfg.m} disagrees with CnavConfig.m={model_cfg.m}")
    data = apply_ablation(data, cfg.ablation)
    dropped = dropped_categories(cfg.ablation)
    active = tuple(cat for cat in ATTACK_CATEGORIES if cat not in dropped)
    disable_ida = "disable_ida" in cfg.ablation

    plan = ida.uniform_plan(cfg.m, categories=active)
    ida_cfg = ida.IdaConfig(m=cfg.m, categories=active, seed=derive_seed(cfg.seed, "ida"))
    model = cnav.init_model(model_cfg, derive_seed(cfg.seed, "init"))
    adam = cnav.init_adam_state(model)

    records: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        plan_used = plan
        order = list(data.train)
        derive_rng(cfg.seed, "shuffle", epoch).shuffle(order)
        bundle_seed = derive_seed(cfg.seed, "bundle", epoch)

        total_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            batch = []
            for item in chunk:
                bundle = build_training_bundle(item, plan, cfg.m, bundle_seed)
                batch.append(
                    (
                        encoder.encode(item.text),
                        [encoder.encode(c.text) for c in bundle.ordered_comments],
                        item.label,
                    )
                )
            grads, batch_loss = cnav.backward(model, batch)
            model, adam = cnav.adam_step(model, grads, adam, cfg.lr)
            total_loss += batch_loss * len(chunk)
        mean_loss = total_loss / len(order)

        measures: dict[CommentCategory, ida.VulnerabilityMeasure] = {}
        if data.validation:
            for cat in active:
                measures[cat] = ida.measure_vulnerability(
                    model, encoder, data.validation, cat, cfg.m, ida_cfg.seed
                )

        ida_record = None
        # With M == X there are no free slots to allocate, so the empty
        # plan is frozen (allocate requires M > X).
        if not disable_ida and cfg.m > ida_cfg.x:
            plan, ida_record = ida.epoch_adjust(
                model, encoder, data.validation, plan, mean_loss, ida_cfg, epoch, measures
            )
        records.append(
            EpochRecord(
                epoch=epoch,
                mean_train_loss=mean_loss,
                plan=plan_used,
                val_accuracy={cat: m.accuracy for cat, m in measures.items()},
                wall_time=time.perf_counter() - started,
                ida_record=ida_record,
            )
        )
    return model, records


EPOCH_COLUMNS = ["epoch", "mean_train_loss"] + [
    f"{prefix}_{cat.value}" for cat in ATTACK_CATEGORIES for prefix in ("val_acc", "quota")
]


def epoch_rows(records: list[EpochRecord]) -> list[list[str]]:
    """Deterministic telemetry rows (wall time deliberately excluded)."""
    rows = []
    for rec in records:
        row = [str(rec.epoch), repr(rec.mean_train_loss)]
        for cat in ATTACK_CATEGORIES:
            acc = rec.val_accuracy.get(cat)
            row.append(repr(acc) if acc is not None else "")
            quota = rec.plan.quota.get(cat)
            row.append(str(quota) if quota is not None else "")
        rows.append(row)
    return rows


def write_epoch_csv(records: list[EpochRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EPOCH_COLUMNS)
        writer.writerows(epoch_rows(records))
