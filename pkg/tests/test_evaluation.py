import numpy as np
import pytest
from sklearn.metrics import accuracy_score, f1_score

from commentshield import cnav, evaluation
from commentshield.corpus import (
    ATTACK_CATEGORIES,
    Comment,
    CommentCategory,
    DatasetError,
    NewsItem,
    build_test_bundle,
)
from commentshield.evaluation import (
    CLEAN,
    COMPREHENSIVE,
    ConfusionCounts,
    EvalReport,
    Regime,
    attack_success_rate,
    clean_comments,
    evaluate,
    metrics_from_counts,
    regime_comments,
    report_rows,
    specific_attack,
    sweep_attacks,
    with_asr,
    write_report_csv,
    write_sweep_csv,
)

P, C, S = ATTACK_CATEGORIES


class VecEncoder:
    def __init__(self, table, d=4):
        self.table = {k: np.array([v], dtype=float) for k, v in table.items()}
        self.default = np.zeros((1, d))

    def encode(self, text):
        return self.table.get(text, self.default)


def comment_sum_model(d=4, m=2):
    """Predicts fake iff the comment vectors' first coordinates sum > 0."""
    config = cnav.CnavConfig(d=d, m=m)
    params = {n: np.zeros(s) for n, s in cnav.param_shapes(config).items()}
    model = cnav.CnavModel(config, params)
    model.params["w_value"][:] = np.eye(d)
    for branch in range(1, m + 1):
        model.params["w_agg"][0, branch * d] = 1.0
    model.params["mlp0_w"][:] = 0.01 * np.eye(d)
    model.params["mlp1_w"][0, 0] = 1.0
    return model


def news_only_model(d=4, m=2):
    """Predicts fake iff the news vector's first coordinate is positive."""
    model = comment_sum_model(d, m)
    model.params["w_agg"][:] = 0.0
    model.params["w_agg"][0, 0] = 1.0
    return model


CALM = [-1.0, 0, 0, 0]
LOUD = [1.0, 0, 0, 0]
TABLE = {
    "calm one": CALM,
    "calm two": CALM,
    "loud one": LOUD,
    "loud two": LOUD,
    "strong attack": [3.0, 0, 0, 0],
    "weak attack": [0.5, 0, 0, 0],
}


def real_item(i, attack_text):
    return NewsItem(
        id=f"r{i}",
        text=f"news {i}",
        label=0,
        comments=[
            Comment("calm one", CommentCategory.ORIGINAL),
            Comment("calm two", CommentCategory.ORIGINAL),
            Comment(attack_text, P),
        ],
    )


def asr_fixture_items():
    """Four clean-correct real items; only the first is attack-sensitive."""
    return [real_item(0, "strong attack")] + [real_item(i, "weak attack") for i in (1, 2, 3)]


# ---------------------------------------------------------------- regimes


def test_regime_labels():
    assert CLEAN.label() == "clean"
    assert COMPREHENSIVE.label() == "comprehensive"
    assert specific_attack(P, 3).label() == "specific_perception_3"


def test_regime_validation():
    with pytest.raises(ValueError, match="unknown regime"):
        Regime("robust")
    with pytest.raises(ValueError, match="attack category"):
        Regime("specific", category=CommentCategory.ORIGINAL, attack_count=1)
    with pytest.raises(ValueError, match="attack_count"):
        Regime("specific", category=P, attack_count=None)
    with pytest.raises(ValueError, match="takes no category"):
        Regime("clean", category=P)


# ---------------------------------------------------------------- metrics


def test_balanced_confusion_fixture():
    report = metrics_from_counts(CLEAN, ConfusionCounts(tp=1, fp=1, tn=1, fn=1))
    assert report.accuracy == 0.5
    assert report.f1_fake == 0.5
    assert report.f1_real == 0.5
    assert report.macro_f1 == 0.5


def test_all_correct_fixture():
    report = metrics_from_counts(CLEAN, ConfusionCounts(tp=2, fp=0, tn=2, fn=0))
    assert (report.accuracy, report.f1_real, report.f1_fake, report.macro_f1) == (1, 1, 1, 1)


def test_zero_over_zero_f1_is_zero():
    # No fake items and nothing predicted fake: F1-fake is 0 by convention.
    report = metrics_from_counts(CLEAN, ConfusionCounts(tp=0, fp=0, tn=4, fn=0))
    assert report.f1_fake == 0.0
    assert report.f1_real == 1.0
    assert report.macro_f1 == 0.5


def test_constant_fake_predictor_on_all_real_items():
    report = metrics_from_counts(CLEAN, ConfusionCounts(tp=0, fp=4, tn=0, fn=0))
    assert report.accuracy == 0.0
    assert report.f1_fake == 0.0
    assert report.f1_real == 0.0


def test_empty_counts_error():
    with pytest.raises(ValueError, match="no samples"):
        metrics_from_counts(CLEAN, ConfusionCounts())
    with pytest.raises(ValueError, match="non-negative"):
        ConfusionCounts(tp=-1)


def test_metrics_match_sklearn_on_random_predictions():
    rng = np.random.default_rng(19)
    for _ in range(100):
        y_true = rng.integers(0, 2, size=17)
        y_pred = rng.integers(0, 2, size=17)
        counts = ConfusionCounts(
            tp=int(np.sum((y_true == 1) & (y_pred == 1))),
            fp=int(np.sum((y_true == 0) & (y_pred == 1))),
            tn=int(np.sum((y_true == 0) & (y_pred == 0))),
            fn=int(np.sum((y_true == 1) & (y_pred == 0))),
        )
        report = metrics_from_counts(CLEAN, counts)
        assert report.accuracy == pytest.approx(accuracy_score(y_true, y_pred), abs=1e-12)
        assert report.f1_fake == pytest.approx(
            f1_score(y_true, y_pred, pos_label=1, zero_division=0), abs=1e-12
        )
        assert report.f1_real == pytest.approx(
            f1_score(y_true, y_pred, pos_label=0, zero_division=0), abs=1e-12
        )
        assert report.macro_f1 == pytest.approx(
            f1_score(y_true, y_pred, average="macro", zero_division=0), abs=1e-12
        )


# ------------------------------------------------------- comment selection


def test_clean_comments_cycle_when_short():
    item = real_item(0, "weak attack")
    texts = [c.text for c in clean_comments(item, m=5)]
    assert texts == ["calm one", "calm two", "calm one", "calm two", "calm one"]


def test_clean_comments_need_an_original():
    item = NewsItem(id="x", text="t", label=0, comments=[Comment("a", P)])
    with pytest.raises(DatasetError, match="no original"):
        clean_comments(item, 2)


def test_specific_zero_attacks_equals_clean():
    item = real_item(0, "weak attack")
    assert regime_comments(item, specific_attack(P, 0), m=4, seed=3) == clean_comments(item, 4)


def test_specific_attacks_fill_trailing_slots():
    item = real_item(0, "strong attack")
    comments = regime_comments(item, specific_attack(P, 1), m=3, seed=0)
    assert [c.category for c in comments] == [
        CommentCategory.ORIGINAL,
        CommentCategory.ORIGINAL,
        P,
    ]
    assert comments[:2] == clean_comments(item, 3)[:2]


def test_specific_count_cannot_exceed_bundle():
    item = real_item(0, "weak attack")
    with pytest.raises(DatasetError, match="exceeds M"):
        regime_comments(item, specific_attack(P, 5), m=4, seed=0)


def test_specific_missing_pool_errors():
    item = real_item(0, "weak attack")
    with pytest.raises(DatasetError, match="cognition"):
        regime_comments(item, specific_attack(C, 1), m=4, seed=0)


def test_comprehensive_delegates_to_test_bundle():
    item = NewsItem(
        id="m1",
        text="text",
        label=1,
        comments=[
            Comment("o", CommentCategory.ORIGINAL),
            Comment("p", P),
            Comment("c", C),
            Comment("s", S),
        ],
    )
    assert (
        regime_comments(item, COMPREHENSIVE, m=6, seed=9)
        == build_test_bundle(item, 6, 9).ordered_comments
    )


# --------------------------------------------------------------- evaluate


def test_evaluate_clean_all_real_fixture():
    report = evaluate(comment_sum_model(), VecEncoder(TABLE), asr_fixture_items(), CLEAN, m=2)
    assert report.counts == ConfusionCounts(tp=0, fp=0, tn=4, fn=0)
    assert report.accuracy == 1.0
    assert report.macro_f1 == 0.5  # f1_fake is 0/0 -> 0 with no fake items


def test_evaluate_mixed_labels_exact_confusion():
    items = [
        NewsItem(id="f0", text="n f0", label=1, comments=[Comment("loud one", CommentCategory.ORIGINAL)]),
        NewsItem(id="f1", text="n f1", label=1, comments=[Comment("calm one", CommentCategory.ORIGINAL)]),
        NewsItem(id="r0", text="n r0", label=0, comments=[Comment("calm two", CommentCategory.ORIGINAL)]),
        NewsItem(id="r1", text="n r1", label=0, comments=[Comment("loud two", CommentCategory.ORIGINAL)]),
    ]
    report = evaluate(comment_sum_model(), VecEncoder(TABLE), items, CLEAN, m=2)
    assert report.counts == ConfusionCounts(tp=1, fn=1, tn=1, fp=1)
    assert report.accuracy == 0.5
    assert report.macro_f1 == 0.5


def test_evaluate_empty_items_errors():
    with pytest.raises(ValueError, match="empty"):
        evaluate(comment_sum_model(), VecEncoder(TABLE), [], CLEAN, m=2)


def test_tie_probability_predicts_real():
    # All-zero vectors give logit 0, p = 0.5 exactly: predicted real.
    config = cnav.CnavConfig(d=4, m=2)
    model = cnav.CnavModel(
        config, {n: np.zeros(s) for n, s in cnav.param_shapes(config).items()}
    )
    report = evaluate(model, VecEncoder({}), asr_fixture_items(), CLEAN, m=2)
    assert report.counts.tn == 4


# -------------------------------------------------------------------- asr


def test_asr_exact_quarter():
    asr = attack_success_rate(
        comment_sum_model(), VecEncoder(TABLE), asr_fixture_items(), P, attack_count=1, m=2
    )
    assert asr == 0.25


def test_asr_zero_for_comment_blind_model():
    table = dict(TABLE)
    table.update({f"news {i}": CALM for i in range(4)})
    model = news_only_model()
    for count in (1, 2):
        asr = attack_success_rate(
            model, VecEncoder(table), asr_fixture_items(), P, count, m=2
        )
        assert asr == 0.0


def test_asr_zero_when_nothing_is_clean_correct():
    table = dict(TABLE)
    table.update({f"news {i}": LOUD for i in range(4)})  # every real item misread
    asr = attack_success_rate(
        news_only_model(), VecEncoder(table), asr_fixture_items(), P, 1, m=2
    )
    assert asr == 0.0


def test_asr_count_validation():
    with pytest.raises(ValueError, match="exceeds M"):
        attack_success_rate(
            comment_sum_model(), VecEncoder(TABLE), asr_fixture_items(), P, 3, m=2
        )


def all_category_items(n=3, perception_text="weak attack"):
    return [
        NewsItem(
            id=f"i{k}",
            text=f"news {k}",
            label=0,
            comments=[
                Comment("calm one", CommentCategory.ORIGINAL),
                Comment(perception_text if k == 0 else "weak attack", P),
                Comment("weak attack", C),
                Comment("weak attack", S),
            ],
        )
        for k in range(n)
    ]


def test_sweep_covers_categories_in_canonical_order():
    items = all_category_items()
    rows = sweep_attacks(comment_sum_model(), VecEncoder(TABLE), items, [0, 1], m=2)
    assert [(r.category, r.attack_count) for r in rows] == [
        (P, 0), (P, 1), (C, 0), (C, 1), (S, 0), (S, 1),
    ]
    assert all(r.asr == 0.0 for r in rows if r.attack_count == 0)
    with pytest.raises(ValueError, match="non-empty"):
        sweep_attacks(comment_sum_model(), VecEncoder(TABLE), items, [], m=2)


# ----------------------------------------------------------------- output


def test_report_rows_include_asr_only_when_measured():
    report = metrics_from_counts(CLEAN, ConfusionCounts(tp=1, fp=0, tn=1, fn=0))
    assert [r[1] for r in report_rows(report)] == ["accuracy", "f1_real", "f1_fake", "macro_f1"]
    rows = report_rows(with_asr(report, 0.125))
    assert rows[-1] == ("clean", "asr", "0.125")


def test_write_report_csv(tmp_path):
    report = metrics_from_counts(specific_attack(C, 2), ConfusionCounts(tp=3, fp=1, tn=2, fn=0))
    path = tmp_path / "report.csv"
    write_report_csv([with_asr(report, 0.5)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "regime,metric,value"
    assert len(lines) == 6
    assert lines[1].startswith("specific_cognition_2,accuracy,")


def test_write_sweep_csv(tmp_path):
    items = all_category_items(n=4, perception_text="strong attack")
    rows = sweep_attacks(comment_sum_model(), VecEncoder(TABLE), items, [0, 1], m=2)
    path = tmp_path / "sweep.csv"
    write_sweep_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "category,attack_count,asr"
    assert len(lines) == 1 + 6
    assert lines[2] == "perception,1,0.25"
