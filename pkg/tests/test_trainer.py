import numpy as np
import pytest

import synth
from commentshield import cnav, evaluation, ida, trainer
from commentshield.corpus import ATTACK_CATEGORIES, CommentCategory, DatasetSplit
from commentshield.encoder import HashingEncoder
from commentshield.rng import derive_seed
from commentshield.trainer import (
    EPOCH_COLUMNS,
    TrainConfig,
    apply_ablation,
    dropped_categories,
    epoch_rows,
    train,
    write_epoch_csv,
)

P, C, S = ATTACK_CATEGORIES


def fast_cfg(**overrides):
    base = dict(m=5, epochs=2, batch_size=8, lr=0.01, seed=3)
    base.update(overrides)
    return TrainConfig(**base)


def fast_setup(cfg):
    model_cfg = cnav.CnavConfig(d=16, m=cfg.m, attention_heads=2)
    encoder = HashingEncoder(16, seed=5)
    return model_cfg, encoder


# ------------------------------------------------------------------ config


def test_config_validation():
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(m=5, epochs=0)
    with pytest.raises(ValueError, match="batch_size"):
        TrainConfig(m=5, batch_size=0)
    with pytest.raises(ValueError, match="M must be >= 4"):
        TrainConfig(m=3)
    with pytest.raises(ValueError, match="unknown ablation"):
        TrainConfig(m=5, ablation=frozenset({"drop_everything"}))


def test_dropped_categories():
    assert dropped_categories(frozenset()) == set()
    assert dropped_categories(frozenset({"disable_ida"})) == set()
    assert dropped_categories(frozenset({"drop_perception", "drop_cognition"})) == {P, C}


def test_apply_ablation_identity_without_drops(small_data):
    assert apply_ablation(small_data, frozenset()) is small_data
    assert apply_ablation(small_data, frozenset({"disable_ida"})) is small_data


def test_apply_ablation_strips_all_splits(small_data):
    stripped = apply_ablation(small_data, frozenset({"drop_perception"}))
    for items in (stripped.train, stripped.validation, stripped.test):
        assert items
        for item in items:
            assert all(c.category != P for c in item.comments)
    # Other categories survive somewhere in the corpus.
    assert any(
        c.category == C for item in stripped.train for c in item.comments
    )
    # The input corpus is untouched.
    assert any(c.category == P for item in small_data.train for c in item.comments)


# ------------------------------------------------------------------- train


def test_train_rejects_empty_split(small_data):
    cfg = fast_cfg()
    model_cfg, encoder = fast_setup(cfg)
    empty = DatasetSplit(train=[], validation=small_data.validation, test=[])
    with pytest.raises(ValueError, match="empty train"):
        train(empty, cfg, model_cfg, encoder)


def test_train_rejects_m_mismatch(small_data):
    cfg = fast_cfg(m=5)
    encoder = HashingEncoder(16, seed=5)
    with pytest.raises(ValueError, match="disagrees"):
        train(small_data, cfg, cnav.CnavConfig(d=16, m=6, attention_heads=2), encoder)


def test_small_run_records(small_data):
    cfg = fast_cfg()
    model_cfg, encoder = fast_setup(cfg)
    model, records = train(small_data, cfg, model_cfg, encoder)
    assert len(records) == cfg.epochs
    assert [r.epoch for r in records] == [0, 1]
    # Epoch 0 always trains on the pre-gate uniform plan.
    assert records[0].plan == ida.uniform_plan(cfg.m)
    for rec in records:
        assert set(rec.val_accuracy) == set(ATTACK_CATEGORIES)
        assert rec.wall_time > 0.0
        assert np.isfinite(rec.mean_train_loss)
    for arr in model.params.values():
        assert np.all(np.isfinite(arr))


def test_train_is_deterministic(small_data, tmp_path):
    cfg = fast_cfg()
    model_cfg, encoder = fast_setup(cfg)
    model_a, records_a = train(small_data, cfg, model_cfg, encoder)
    model_b, records_b = train(small_data, cfg, model_cfg, encoder)
    path_a, path_b = tmp_path / "a.cnav", tmp_path / "b.cnav"
    cnav.save_model(model_a, path_a)
    cnav.save_model(model_b, path_b)
    assert path_a.read_bytes() == path_b.read_bytes()
    assert epoch_rows(records_a) == epoch_rows(records_b)


def test_disable_ida_freezes_plan(small_data):
    cfg = fast_cfg(ablation=frozenset({"disable_ida"}))
    model_cfg, encoder = fast_setup(cfg)
    _, records = train(small_data, cfg, model_cfg, encoder)
    uniform = ida.uniform_plan(cfg.m)
    for rec in records:
        assert rec.ida_record is None
        assert rec.plan == uniform
        # Vulnerability is still measured for telemetry.
        assert set(rec.val_accuracy) == set(ATTACK_CATEGORIES)


def test_drop_ablation_excludes_category(small_data):
    cfg = fast_cfg(ablation=frozenset({"drop_perception"}))
    model_cfg, encoder = fast_setup(cfg)
    _, records = train(small_data, cfg, model_cfg, encoder)
    for rec in records:
        assert P not in rec.plan.quota
        assert set(rec.val_accuracy) == {C, S}


def test_m_equal_base_slots_freezes_empty_plan(small_data):
    cfg = fast_cfg(m=4, epochs=2)
    model_cfg, encoder = fast_setup(cfg)
    _, records = train(small_data, cfg, model_cfg, encoder)
    for rec in records:
        assert rec.ida_record is None
        assert rec.plan.budget == 0
        assert all(q == 0 for q in rec.plan.quota.values())


def test_zero_lr_leaves_parameters_at_init(small_data):
    cfg = fast_cfg(lr=0.0, epochs=2)
    model_cfg, encoder = fast_setup(cfg)
    model, _ = train(small_data, cfg, model_cfg, encoder)
    init = cnav.init_model(model_cfg, derive_seed(cfg.seed, "init"))
    for name, arr in model.params.items():
        np.testing.assert_array_equal(arr, init.params[name])


def test_training_fits_separable_corpus(small_data):
    cfg = TrainConfig(m=5, epochs=6, batch_size=8, lr=0.01, seed=7)
    model_cfg = cnav.CnavConfig(d=32, m=5, attention_heads=4)
    encoder = HashingEncoder(32, seed=7)
    model, records = train(small_data, cfg, model_cfg, encoder)
    assert records[-1].mean_train_loss < records[0].mean_train_loss
    report = evaluation.evaluate(model, encoder, small_data.train, evaluation.CLEAN, cfg.m)
    assert report.accuracy >= 0.95


# --------------------------------------------------------------- telemetry


def test_epoch_columns_shape():
    assert EPOCH_COLUMNS[:2] == ["epoch", "mean_train_loss"]
    assert "val_acc_perception" in EPOCH_COLUMNS
    assert "quota_socio_emotional" in EPOCH_COLUMNS
    assert len(EPOCH_COLUMNS) == 2 + 2 * len(ATTACK_CATEGORIES)


def test_epoch_csv_excludes_wall_time(small_data, tmp_path):
    cfg = fast_cfg(epochs=1)
    model_cfg, encoder = fast_setup(cfg)
    _, records = train(small_data, cfg, model_cfg, encoder)
    records[0].wall_time = 123.456
    path = tmp_path / "epochs.csv"
    write_epoch_csv(records, path)
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0] == ",".join(EPOCH_COLUMNS)
    assert len(lines) == 2
    assert "123.456" not in text
    row = lines[1].split(",")
    assert len(row) == len(EPOCH_COLUMNS)
    assert row[0] == "0"


def test_epoch_rows_blank_for_missing_category(small_data):
    cfg = fast_cfg(epochs=1, ablation=frozenset({"drop_cognition"}))
    model_cfg, encoder = fast_setup(cfg)
    _, records = train(small_data, cfg, model_cfg, encoder)
    row = epoch_rows(records)[0]
    cols = dict(zip(EPOCH_COLUMNS, row))
    assert cols["val_acc_cognition"] == ""
    assert cols["quota_cognition"] == ""
    assert cols["val_acc_perception"] != ""
