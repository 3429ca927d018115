"""Group-adaptive comment allocation.

After a training epoch whose mean loss clears the gate (< 0.5), the model
is probed on three targeted validation sets, one per attack category.
Each category's loss/accuracy pair is folded into a vulnerability score,
mapped to a Dirichlet concentration via an exponential, and the
closed-form Dirichlet expectation alpha_j / sum(alpha) becomes the
per-category share of the M - X free comment slots. Shares are turned
into integer quotas by ceiling, with a priority rule (largest raw quota
first) when the ceilings overshoot the budget.
"""

import math
from dataclasses import dataclass, field

from . import cnav
from .corpus import (
    ATTACK_CATEGORIES,
    BASE_SLOTS,
    CommentCategory,
    NewsItem,
    attack_rank,
    build_validation_bundle,
)
from .rng import derive_seed

LOSS_GATE = 0.5

# Clamp on beta * score so the exponential stays finite.
MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class VulnerabilityMeasure:
    category: CommentCategory
    loss: float
    accuracy: float

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValueError(f"accuracy out of range: {self.accuracy}")
        if not (math.isfinite(self.loss) and self.loss >= 0.0):
            raise ValueError(f"loss must be finite and >= 0: {self.loss}")


@dataclass(frozen=True)
class ScoreWeights:
    w_loss: float = 0.5
    w_acc: float = 0.3
    w_cross: float = 0.2

    def __post_init__(self):
        if self.w_loss + self.w_acc + self.w_cross != 1.0:
            raise ValueError("score weights must sum to 1 exactly")


@dataclass(frozen=True)
class DirichletParams:
    alpha: dict[CommentCategory, float]
    beta: float = 5.0
    eta: float = 0.1

    def __post_init__(self):
        for cat, a in self.alpha.items():
            if a <= self.eta:
                raise ValueError(f"alpha[{cat.value}]={a} must exceed eta={self.eta}")


@dataclass(frozen=True)
class AllocationPlan:
    quota: dict[CommentCategory, int]
    budget: int
    base_slots: int = BASE_SLOTS

    def __post_init__(self):
        if any(q < 0 for q in self.quota.values()):
            raise ValueError(f"negative quota in {self.quota}")
        if sum(self.quota.values()) > self.budget:
            raise ValueError(f"quotas {self.quota} exceed budget {self.budget}")

    def total_quota(self) -> int:
        return sum(self.quota.values())


def uniform_plan(m: int, categories=ATTACK_CATEGORIES, x: int = BASE_SLOTS) -> AllocationPlan:
    """Pre-gate plan: floor((M-X)/k) comments for each active attack
    category; leftover capacity flows to originals via the bundle fill
    rule. M == X gives the empty plan (base slots only)."""
    if m < x:
        raise ValueError(f"M={m} is below the {x} base slots")
    per = (m - x) // len(categories) if categories else 0
    return AllocationPlan(quota={cat: per for cat in categories}, budget=m - x)


def measure_vulnerability(
    model: cnav.CnavModel,
    encoder,
    validation: list[NewsItem],
    attack: CommentCategory,
    m: int,
    seed: int = 0,
) -> VulnerabilityMeasure:
    """Mean loss and accuracy on the targeted validation set for one
    attack category (3 original comments + M-3 attack comments each)."""
    if not validation:
        raise ValueError("empty validation set")
    total_loss = 0.0
    correct = 0
    for item in validation:
        bundle = build_validation_bundle(item, attack, m, derive_seed(seed, "vuln", item.id))
        news_vec = encoder.encode(item.text)
        comment_vecs = [encoder.encode(c.text) for c in bundle.ordered_comments]
        pred = cnav.forward(model, news_vec, comment_vecs)
        total_loss += cnav.loss(pred, item.label)
        predicted = 1 if pred.probability > 0.5 else 0
        correct += int(predicted == item.label)
    n = len(validation)
    return VulnerabilityMeasure(category=attack, loss=total_loss / n, accuracy=correct / n)


def score(measure: VulnerabilityMeasure, weights: ScoreWeights = ScoreWeights()) -> float:
    """Composite vulnerability score: weighted loss, accuracy, and their product."""
    return (
        weights.w_loss * measure.loss
        + weights.w_acc * measure.accuracy
        + weights.w_cross * measure.loss * measure.accuracy
    )


def concentrations(
    scores: dict[CommentCategory, float], beta: float = 5.0, eta: float = 0.1
) -> DirichletParams:
    """alpha_j = exp(beta * s_j) + eta, with the exponent clamped."""
    if beta <= 0 or eta <= 0:
        raise ValueError("beta and eta must be positive")
    alpha = {
        cat: math.exp(min(beta * s, MAX_EXPONENT)) + eta for cat, s in scores.items()
    }
    return DirichletParams(alpha=alpha, beta=beta, eta=eta)


def expectation(params: DirichletParams) -> dict[CommentCategory, float]:
    """Closed-form Dirichlet mean: alpha_j / sum(alpha)."""
    total = sum(params.alpha.values())
    return {cat: a / total for cat, a in params.alpha.items()}


def allocate(
    exp_p: dict[CommentCategory, float], m: int, x: int = BASE_SLOTS
) -> AllocationPlan:
    """Integer quotas from expected shares of the M-X budget.

    Raw quotas are ceilings of share * (M-X). If their sum fits the
    budget they are final; otherwise categories are served in descending
    raw-quota order (ties by canonical category order), each receiving
    min(raw, remaining budget) until the budget runs out.
    """
    if m <= x:
        raise ValueError(f"M={m} must exceed X={x}")
    budget = m - x
    raw = {cat: math.ceil(p * budget) for cat, p in exp_p.items()}
    if sum(raw.values()) <= budget:
        return AllocationPlan(quota=raw, budget=budget)
    quota = {cat: 0 for cat in raw}
    remaining = budget
    for cat in sorted(raw, key=lambda c: (-raw[c], attack_rank(c))):
        if remaining <= 0:
            break
        quota[cat] = min(raw[cat], remaining)
        remaining -= quota[cat]
    return AllocationPlan(quota=quota, budget=budget)


@dataclass(frozen=True)
class IdaConfig:
    m: int
    x: int = BASE_SLOTS
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    beta: float = 5.0
    eta: float = 0.1
    # Score the accuracy complement (1 - acc) instead of the accuracy
    # itself; off by default, see score().
    acc_complement: bool = False
    categories: tuple[CommentCategory, ...] = ATTACK_CATEGORIES
    seed: int = 0


@dataclass
class IdaEpochRecord:
    epoch: int
    gate_open: bool
    train_loss: float
    measures: dict[CommentCategory, VulnerabilityMeasure] = field(default_factory=dict)
    scores: dict[CommentCategory, float] = field(default_factory=dict)
    alpha: dict[CommentCategory, float] = field(default_factory=dict)
    exp_p: dict[CommentCategory, float] = field(default_factory=dict)
    plan: AllocationPlan | None = None


def epoch_adjust(
    model: cnav.CnavModel,
    encoder,
    validation: list[NewsItem],
    prev_plan: AllocationPlan,
    train_loss: float,
    cfg: IdaConfig,
    epoch: int = 0,
    measures: dict[CommentCategory, VulnerabilityMeasure] | None = None,
) -> tuple[AllocationPlan, IdaEpochRecord]:
    """Recompute the allocation plan when the loss gate opens.

    With train_loss >= 0.5 the gate stays closed and the previous plan is
    returned untouched. Otherwise each active category is measured,
    scored, mapped to a concentration, and the expectation is turned into
    quotas. Callers that already probed the validation sets this epoch
    can pass their measures to skip the redundant passes.
    """
    record = IdaEpochRecord(epoch=epoch, gate_open=train_loss < LOSS_GATE, train_loss=train_loss)
    if measures:
        record.measures = dict(measures)
    if not record.gate_open or not cfg.categories:
        record.plan = prev_plan
        return prev_plan, record
    for cat in cfg.categories:
        if cat in record.measures:
            measure = record.measures[cat]
        else:
            measure = measure_vulnerability(model, encoder, validation, cat, cfg.m, cfg.seed)
            record.measures[cat] = measure
        scored = measure
        if cfg.acc_complement:
            scored = VulnerabilityMeasure(cat, measure.loss, 1.0 - measure.accuracy)
        record.scores[cat] = score(scored, cfg.weights)
    params = concentrations(record.scores, cfg.beta, cfg.eta)
    record.alpha = dict(params.alpha)
    record.exp_p = expectation(params)
    plan = allocate(record.exp_p, cfg.m, cfg.x)
    record.plan = plan
    return plan, record


TELEMETRY_COLUMNS = ["epoch", "gate_open", "train_loss"] + [
    f"{prefix}_{cat.value}"
    for cat in ATTACK_CATEGORIES
    for prefix in ("m_loss", "m_acc", "s", "alpha", "exp_p", "quota")
]


def telemetry_rows(records: list[IdaEpochRecord]) -> list[list[str]]:
    """Flatten epoch records into CSV rows matching TELEMETRY_COLUMNS."""
    rows = []
    for rec in records:
        row = [str(rec.epoch), "1" if rec.gate_open else "0", repr(rec.train_loss)]
        for cat in ATTACK_CATEGORIES:
            measure = rec.measures.get(cat)
            row.append(repr(measure.loss) if measure else "")
            row.append(repr(measure.accuracy) if measure else "")
            row.append(repr(rec.scores[cat]) if cat in rec.scores else "")
            row.append(repr(rec.alpha[cat]) if cat in rec.alpha else "")
            row.append(repr(rec.exp_p[cat]) if cat in rec.exp_p else "")
            quota = rec.plan.quota.get(cat) if rec.plan else None
            row.append(str(quota) if quota is not None else "")
        rows.append(row)
    return rows
