"""Command-line behaviour and exit codes."""

from __future__ import annotations

import json

import pytest

from npbe.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main, read_config


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_program(capsys):
    code, out, _ = run(capsys, "run-program", "--program", "Join(Split(x,'/'),':')", "--input", "25/11/16")
    assert code == EXIT_OK and out.strip() == "25:11:16"


def test_run_program_parse_error_has_offset(capsys):
    code, _, err = run(capsys, "run-program", "--program", "Join(Split(x,'/'),:')", "--input", "a")
    assert code == EXIT_RUNTIME and "at byte 18" in err


def test_run_program_runtime_error_has_step(capsys):
    code, _, err = run(capsys, "run-program", "--program", "Select(Split(x,'/'),3)", "--input", "a/b")
    assert code == EXIT_RUNTIME and "IndexOutOfRange" in err and "step 2" in err


def test_synthesize_search(capsys):
    code, out, _ = run(capsys, "synthesize", "--input", "john@example.com", "--output", "john", "--engine", "search")
    assert code == EXIT_OK and out.splitlines()[0] == "Select(Split(x, '@'), 0)"
    code, out, _ = run(capsys, "synthesize", "--input", "john@example.com", "--output", "john", "--k", "3")
    assert len(out.splitlines()) == 3


def test_synthesize_nothing_found(capsys):
    code, out, _ = run(capsys, "synthesize", "--input", "abc", "--output", "xyz", "--max-steps", "1")
    assert code == EXIT_RUNTIME and "no program found within budget" in out


def test_usage_errors(capsys):
    assert run(capsys, "gen-data", "--n", "0", "--out", "x")[0] == EXIT_USAGE
    assert run(capsys, "gen-data", "--out", "x")[0] == EXIT_USAGE
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys, "train", "--scale", "huge", "--data", "d", "--ckpt-dir", "c")[0] == EXIT_USAGE
    assert run(capsys, "synthesize", "--input", "a", "--output", "a", "--engine", "neural")[0] == EXIT_USAGE


def test_eval_missing_checkpoint(capsys, tmp_path):
    code, _, err = run(capsys, "eval", "--ckpt", str(tmp_path / "none"))
    assert code == EXIT_RUNTIME and "does not exist" in err
    code, _, err = run(capsys, "eval", "--ckpt", str(tmp_path))
    assert code == EXIT_RUNTIME and "no checkpoint" in err


def test_train_missing_data(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--data", str(tmp_path / "nodata"), "--ckpt-dir", str(tmp_path / "ck"))
    assert code == EXIT_RUNTIME


def test_select_tasks():
    from npbe.cli import UsageError, select_tasks

    assert [t.id for t in select_tasks("Split, Join")] == [7]
    assert [t.id for t in select_tasks("0, 7")] == [0, 7]
    assert [t.id for t in select_tasks("case change,1")] == [0, 1]
    assert len(select_tasks("all")) == 45
    with pytest.raises(UsageError):
        select_tasks("99")


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nepochs = 3\nscale=toy\n\nlr=0.01\n")
    assert read_config(cfg) == {"epochs": "3", "scale": "toy", "lr": "0.01"}
    (tmp_path / "bad.cfg").write_text("no equals sign\n")
    from npbe.cli import UsageError

    with pytest.raises(UsageError):
        read_config(tmp_path / "bad.cfg")


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-data -> train -> eval at the smallest sensible size."""
    root = tmp_path_factory.mktemp("cli")
    data, ck = root / "data", root / "ck"
    cfg = root / "train.cfg"
    cfg.write_text("epoch_size=40\nval_per_task=3\nbatch_size=20\n")
    codes = [
        main(["gen-data", "--catalog", "0,7", "--n", "40", "--seed", "4", "--out", str(data),
              "--rq1-per-task", "4", "--rq2-per-task", "4"]),
    ]
    return root, data, ck, cfg, codes


def test_gen_data_and_seed_env(pipeline, tmp_path, monkeypatch, capsys):
    root, data, _, _, codes = pipeline
    assert codes == [EXIT_OK]
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["tasks"] == [0, 7] and manifest["seed"] == 4
    monkeypatch.setenv("NPBE_SEED", "4")
    code, out, _ = run(capsys, "gen-data", "--catalog", "0,7", "--n", "40", "--out", str(tmp_path),
                       "--rq1-per-task", "4", "--rq2-per-task", "4")
    assert code == EXIT_OK and "task  7 Split, Join" in out
    assert (tmp_path / "manifest.json").read_bytes() == (data / "manifest.json").read_bytes()


def test_train_eval_synthesize(pipeline, capsys):
    root, data, ck, cfg, _ = pipeline
    code, out, err = run(capsys, "train", "--data", str(data), "--ckpt-dir", str(ck), "--epochs", "2",
                         "--config", str(cfg), "--seed", "1")
    assert code == EXIT_OK, err
    assert json.loads(out)["epochs"] == 2
    code, out, _ = run(capsys, "train", "--data", str(data), "--ckpt-dir", str(ck), "--epochs", "3",
                       "--config", str(cfg), "--seed", "1", "--resume")
    assert code == EXIT_OK and json.loads(out)["epochs"] == 3
    code, out, _ = run(capsys, "eval", "--ckpt", str(ck), "--rq", "1", "--data", str(data), "--out", str(root / "rep"))
    assert code == EXIT_OK and "Average over All 2 Tasks" in out
    assert (root / "rep" / "rq1.jsonl").exists()
    code, out, _ = run(capsys, "eval", "--ckpt", str(ck), "--rq", "2", "--data", str(data))
    assert code == EXIT_OK and "seen" in out
    assert run(capsys, "eval", "--ckpt", str(ck), "--rq", "2")[0] == EXIT_USAGE
    code, out, _ = run(capsys, "synthesize", "--input", "ab", "--output", "AB", "--engine", "neural", "--ckpt", str(ck))
    assert code in (EXIT_OK, EXIT_RUNTIME)
    assert out.strip()


def test_eval_is_deterministic_under_seed(pipeline, capsys):
    _, data, ck, _, _ = pipeline
    if not ck.exists():
        pytest.skip("depends on test_train_eval_synthesize")
    a = run(capsys, "eval", "--ckpt", str(ck), "--catalog", "0", "--n", "5", "--seed", "9")[1]
    b = run(capsys, "eval", "--ckpt", str(ck), "--catalog", "0", "--n", "5", "--seed", "9")[1]
    assert a == b
