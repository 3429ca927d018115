import json

import pytest

from cembexport.cli import main
from test_export import parse_cemb, small_dataset


def test_cli_happy_path(tmp_path, model_dir, capsys):
    dataset = tmp_path / "data.jsonl"
    distinct = small_dataset(dataset)
    out = tmp_path / "out.cemb"
    argv = [str(dataset), model_dir, str(out), "--max-len", "8", "--batch-size", "2"]
    assert main(argv) == 0
    stdout = capsys.readouterr().out
    assert "wrote" in stdout and str(out) in stdout
    dim, entries = parse_cemb(out.read_bytes())
    assert len(entries) == distinct
    assert all(seq.shape[0] <= 8 for _, seq in entries)


def test_cli_missing_dataset(tmp_path, model_dir, capsys):
    argv = [str(tmp_path / "nope.jsonl"), model_dir, str(tmp_path / "out.cemb")]
    assert main(argv) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_cli_rejects_bad_max_len(tmp_path, model_dir, capsys):
    dataset = tmp_path / "data.jsonl"
    small_dataset(dataset)
    argv = [str(dataset), model_dir, str(tmp_path / "out.cemb"), "--max-len", "0"]
    assert main(argv) == 1
    assert "max_len" in capsys.readouterr().err


def test_cli_bad_schema_reports_line(tmp_path, model_dir, capsys):
    dataset = tmp_path / "bad.jsonl"
    dataset.write_text(json.dumps({"id": "x"}) + "\n")
    argv = [str(dataset), model_dir, str(tmp_path / "out.cemb")]
    assert main(argv) == 1
    assert "bad.jsonl:1" in capsys.readouterr().err


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "cembexport" in capsys.readouterr().out
