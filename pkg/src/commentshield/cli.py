"""Command-line entry point.

Subcommands cover the full pipeline: generate (attack-comment
augmentation), train (adversarial training with adaptive allocation),
eval (regime metrics, ASR sweeps, plots), and ablate (component
knock-out grid). Every run resolves its settings from defaults, then an
optional key=value config file, then flags, and writes a manifest
alongside its outputs. All randomness flows from --seed.
"""

import argparse
import datetime
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, attackgen, cnav, encoder as enc, evaluation, ida, svgplot, trainer
from .corpus import (
    ATTACK_CATEGORIES,
    CommentCategory,
    DatasetSplit,
    load_dataset,
    split_statistics,
    write_dataset,
)
from .rng import derive_seed

_ABLATE_CHOICES = {
    "ida": "disable_ida",
    "p": "drop_perception",
    "c": "drop_cognition",
    "s": "drop_socioemotional",
}

_ABLATION_LEGS = {
    "ac": frozenset(),
    "ac-ida": frozenset({"disable_ida"}),
    "ac-p": frozenset({"drop_perception"}),
    "ac-c": frozenset({"drop_cognition"}),
    "ac-s": frozenset({"drop_socioemotional"}),
}

_LEG_ORDER = ["ac", "ac-ida", "ac-p", "ac-c", "ac-s"]


class CliError(ValueError):
    """Configuration or invocation problem reported as a clean exit."""


def parse_config(path: str | Path) -> dict[str, str]:
    """Line-based key=value file; blank lines and # comments ignored."""
    settings: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            settings[key.strip()] = value.strip()
    return settings


def _resolve(args, config: dict[str, str], key: str, default, cast):
    """Flag > config file > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        try:
            return cast(config[key])
        except (TypeError, ValueError) as exc:
            raise CliError(f"config key {key}: {exc}") from None
    return default


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _write_manifest(
    out_dir: Path, command: str, seed: int, settings: dict, inputs: list, outputs: list, started: str
) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": settings,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "started": started,
        "finished": _utc_now(),
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _make_encoder(config: dict[str, str], dim: int, seed: int):
    """Hash featurizer by default; a config `embeddings` key switches to a
    precomputed store (whose dim must match the model)."""
    if "embeddings" in config:
        store = enc.load_embeddings(config["embeddings"])
        if store.dim != dim:
            raise CliError(f"embedding dim {store.dim} does not match model dim {dim}")
        return enc.PrecomputedEncoder(store)
    return enc.HashingEncoder(dim, seed)


def cmd_generate(args) -> int:
    started = _utc_now()
    config = parse_config(args.config) if args.config else {}
    seed = _resolve(args, config, "seed", 0, int)
    per_category = _resolve(args, config, "per_category", 3, int)
    if per_category < 1:
        raise CliError(f"per-category must be >= 1, got {per_category}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    data = load_dataset(args.dataset)
    endpoint = None
    if not args.fallback:
        missing = [k for k in ("base_url", "model_name", "api_key_env") if k not in config]
        if missing:
            raise CliError(
                f"LLM generation needs config keys {missing} (or pass --fallback)"
            )
        key_var = config["api_key_env"]
        api_key = os.environ.get(key_var)
        if not api_key:
            raise CliError(f"environment variable {key_var} is not set")
        endpoint = attackgen.EndpointConfig(
            base_url=config["base_url"],
            model_name=config["model_name"],
            api_key=api_key,
            max_parallel=int(config.get("max_parallel", 4)),
            timeout=float(config.get("timeout", 30.0)),
            max_retries=int(config.get("max_retries", 3)),
            temperature=float(config.get("temperature", 0.8)),
            retry_backoff=float(config.get("retry_backoff", 1.0)),
        )

    def augment(item):
        if args.fallback:
            fresh = [
                attackgen.generate_fallback(item, level, derive_seed(seed, "sample", k))
                for level in ATTACK_CATEGORIES
                for k in range(per_category)
            ]
        else:
            fresh = attackgen.generate_attacks(item, per_category, endpoint, seed)
        return replace(item, comments=item.comments + fresh)

    augmented = DatasetSplit(
        train=[augment(i) for i in data.train],
        validation=[augment(i) for i in data.validation],
        test=[augment(i) for i in data.test],
    )
    out_path = out_dir / "augmented.jsonl"
    write_dataset(augmented, out_path)
    settings = {"per_category": per_category, "fallback": bool(args.fallback)}
    _write_manifest(out_dir, "generate", seed, settings, [args.dataset], [out_path], started)
    stats = split_statistics(augmented)
    total = sum(s["total"]["comments"] for s in stats.values())
    print(f"wrote {out_path} ({total} comments across splits)")
    return 0


def _train_config(args, config) -> tuple[trainer.TrainConfig, cnav.CnavConfig, int, int]:
    seed = _resolve(args, config, "seed", 0, int)
    m = _resolve(args, config, "m", 16, int)
    dim = _resolve(args, config, "dim", 32, int)
    heads = _resolve(args, config, "heads", 4, int)
    hidden_raw = config.get("mlp_hidden", "")
    hidden = tuple(int(h) for h in hidden_raw.split(",") if h.strip()) or None
    flags = frozenset(_ABLATE_CHOICES[a] for a in (args.ablate or []))
    cfg = trainer.TrainConfig(
        m=m,
        epochs=_resolve(args, config, "epochs", 6, int),
        batch_size=_resolve(args, config, "batch_size", 32, int),
        lr=_resolve(args, config, "lr", 1e-3, float),
        seed=seed,
        ablation=flags,
    )
    model_cfg = cnav.CnavConfig(d=dim, m=m, mlp_hidden=hidden, attention_heads=heads)
    return cfg, model_cfg, seed, dim


def _val_accuracy_chart(records: list[trainer.EpochRecord]) -> str | None:
    series = []
    for cat in ATTACK_CATEGORIES:
        points = [
            (float(rec.epoch), rec.val_accuracy[cat])
            for rec in records
            if cat in rec.val_accuracy
        ]
        if points:
            series.append(svgplot.LineSeries(name=cat.value, points=points))
    if not series:
        return None
    return svgplot.line_chart(
        series,
        title="Validation accuracy by attack category",
        x_label="epoch",
        y_label="accuracy",
    )


def cmd_train(args) -> int:
    started = _utc_now()
    config = parse_config(args.config) if args.config else {}
    cfg, model_cfg, seed, dim = _train_config(args, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    data = load_dataset(args.dataset)
    encoder = _make_encoder(config, dim, seed)
    model, records = trainer.train(data, cfg, model_cfg, encoder)

    ckpt_path = out_dir / "checkpoint.cnav"
    cnav.save_model(model, ckpt_path)
    epochs_path = out_dir / "epochs.csv"
    trainer.write_epoch_csv(records, epochs_path)
    outputs = [ckpt_path, epochs_path]

    ida_records = [rec.ida_record for rec in records if rec.ida_record is not None]
    if ida_records:
        ida_path = out_dir / "ida.csv"
        _write_csv(ida_path, ida.TELEMETRY_COLUMNS, ida.telemetry_rows(ida_records))
        outputs.append(ida_path)

    chart = _val_accuracy_chart(records)
    if chart is not None:
        chart_path = out_dir / "val_accuracy.svg"
        svgplot.write_chart(chart, chart_path)
        outputs.append(chart_path)

    settings = {
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "lr": cfg.lr,
        "m": cfg.m,
        "dim": dim,
        "heads": model_cfg.attention_heads,
        "ablation": sorted(cfg.ablation),
    }
    _write_manifest(out_dir, "train", seed, settings, [args.dataset], outputs, started)
    print(f"wrote {ckpt_path} (final train loss {records[-1].mean_train_loss:.4f})")
    return 0


def _write_csv(path: Path, columns: list[str], rows: list[list[str]]) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def _parse_counts(raw: str) -> list[int]:
    try:
        counts = [int(c) for c in raw.split(",") if c.strip() != ""]
    except ValueError:
        raise CliError(f"--counts expects comma-separated integers, got {raw!r}") from None
    if not counts or any(c < 0 for c in counts):
        raise CliError(f"--counts needs non-negative integers, got {raw!r}")
    return counts


def cmd_eval(args) -> int:
    started = _utc_now()
    config = parse_config(args.config) if args.config else {}
    seed = _resolve(args, config, "seed", 0, int)
    m = _resolve(args, config, "m", None, int)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    data = load_dataset(args.dataset)
    model = cnav.load_model(args.checkpoint)
    if m is None:
        m = model.config.m
    elif model.config.m != m:
        raise CliError(f"--m {m} does not match checkpoint M={model.config.m}")
    encoder = _make_encoder(config, model.config.d, seed)
    items = data.test
    outputs = []

    if args.regime == "sweep":
        counts = _parse_counts(args.counts or "0,1,2,3")
        rows = evaluation.sweep_attacks(model, encoder, items, counts, m, seed)
        sweep_path = out_dir / "sweep.csv"
        evaluation.write_sweep_csv(rows, sweep_path)
        series = [
            svgplot.LineSeries(
                name=cat.value,
                points=[(float(r.attack_count), r.asr) for r in rows if r.category == cat],
            )
            for cat in ATTACK_CATEGORIES
        ]
        chart_path = out_dir / "asr_sweep.svg"
        svgplot.write_chart(
            svgplot.line_chart(
                series,
                title="Attack success rate by attack count",
                x_label="attack comments",
                y_label="ASR",
            ),
            chart_path,
        )
        outputs = [sweep_path, chart_path]
    else:
        reports = []
        if args.regime == "clean":
            reports.append(evaluation.evaluate(model, encoder, items, evaluation.CLEAN, m, seed))
        elif args.regime == "comprehensive":
            reports.append(
                evaluation.evaluate(model, encoder, items, evaluation.COMPREHENSIVE, m, seed)
            )
        else:
            counts = _parse_counts(args.counts or "0,1,2,3")
            for category in ATTACK_CATEGORIES:
                for count in counts:
                    regime = evaluation.specific_attack(category, count)
                    report = evaluation.evaluate(model, encoder, items, regime, m, seed)
                    asr = evaluation.attack_success_rate(
                        model, encoder, items, category, count, m, seed
                    )
                    reports.append(evaluation.with_asr(report, asr))
        report_path = out_dir / "report.csv"
        evaluation.write_report_csv(reports, report_path)
        outputs = [report_path]

    settings = {"regime": args.regime, "m": m, "counts": args.counts}
    _write_manifest(out_dir, "eval", seed, settings, [args.dataset, args.checkpoint], outputs, started)
    print(f"wrote {', '.join(str(p) for p in outputs)}")
    return 0


def cmd_ablate(args) -> int:
    started = _utc_now()
    config = parse_config(args.config) if args.config else {}
    cfg, model_cfg, seed, dim = _train_config(args, config)
    if args.ablate:
        raise CliError("ablate chooses its own flags per leg; drop --ablate")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    legs = list(_LEG_ORDER)
    if args.only:
        requested = [leg.strip().lower() for leg in args.only.split(",") if leg.strip()]
        unknown = [leg for leg in requested if leg not in _ABLATION_LEGS]
        if unknown:
            raise CliError(f"unknown ablation legs {unknown}; choose from {_LEG_ORDER}")
        legs = [leg for leg in _LEG_ORDER if leg == "ac" or leg in requested]

    data = load_dataset(args.dataset)
    encoder = _make_encoder(config, dim, seed)
    rows = []
    for leg in legs:
        leg_cfg = replace(cfg, ablation=_ABLATION_LEGS[leg])
        model, _ = trainer.train(data, leg_cfg, model_cfg, encoder)
        report = evaluation.evaluate(
            model, encoder, data.test, evaluation.COMPREHENSIVE, cfg.m, seed
        )
        rows.append(
            [
                leg,
                repr(report.accuracy),
                repr(report.f1_real),
                repr(report.f1_fake),
                repr(report.macro_f1),
            ]
        )
        print(f"{leg}: macro_f1={report.macro_f1:.4f}")

    table_path = out_dir / "ablation.csv"
    _write_csv(table_path, ["leg", "accuracy", "f1_real", "f1_fake", "macro_f1"], rows)
    settings = {"legs": legs, "epochs": cfg.epochs, "m": cfg.m}
    _write_manifest(out_dir, "ablate", seed, settings, [args.dataset], [table_path], started)
    print(f"wrote {table_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commentshield",
        description="Comment-aware fake news detection with adversarial training.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("dataset", help="dataset file (one JSON object per line)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="root random seed (default 0)")

    p_gen = sub.add_parser("generate", help="add adversarial comments to a dataset")
    common(p_gen)
    p_gen.add_argument("--fallback", action="store_true", help="use template attacks, no LLM")
    p_gen.add_argument("--per-category", type=int, dest="per_category", help="attacks per category (default 3)")
    p_gen.set_defaults(func=cmd_generate)

    def train_flags(p):
        p.add_argument("--epochs", type=int, help="training epochs (default 6)")
        p.add_argument("--batch-size", type=int, dest="batch_size", help="mini-batch size (default 32)")
        p.add_argument("--m", type=int, help="comments per bundle (default 16)")
        p.add_argument("--lr", type=float, help="learning rate (default 1e-3)")
        p.add_argument("--dim", type=int, help="embedding width (default 32)")
        p.add_argument("--heads", type=int, help="attention heads (default 4)")
        p.add_argument(
            "--ablate",
            action="append",
            choices=sorted(_ABLATE_CHOICES),
            help="drop a component: ida, p, c, s (repeatable)",
        )

    p_train = sub.add_parser("train", help="train the fusion classifier")
    common(p_train)
    train_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p_eval)
    p_eval.add_argument("checkpoint", help="model checkpoint path")
    p_eval.add_argument(
        "--regime",
        required=True,
        choices=["clean", "comprehensive", "specific", "sweep"],
        help="evaluation regime",
    )
    p_eval.add_argument("--counts", help="comma-separated attack counts (default 0,1,2,3)")
    p_eval.add_argument("--m", type=int, help="comments per bundle (default 16)")
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="train and compare component knock-outs")
    common(p_abl)
    train_flags(p_abl)
    p_abl.add_argument("--only", help="comma-separated legs besides ac (e.g. ac-ida)")
    p_abl.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, attackgen.AttackGenError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
