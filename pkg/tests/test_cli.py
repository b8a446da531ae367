import io
import json
from pathlib import Path

import pytest

from lightmind.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from lightmind.evaluate import EvalFlags, evaluate, flag_grid, format_table, lookup
from lightmind.model import AgentModel, ModelConfig
from lightmind.synthetic import generate_synthetic
from helpers import MockScorerServer

FIX = Path(__file__).parent / "fixtures"
SMALL = "dim = 16\nlayers = 2\nn_slots = 8\ngru_hidden = 16\nscorer_hidden = 16\nn_buckets = 512\n"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def json_lines(out):
    return [json.loads(l) for l in out.splitlines() if l.startswith("{")]


def test_parse_setting(capsys):
    code, out, _ = run(capsys, "parse", FIX / "palace.setting")
    assert code == EXIT_OK and "carrying(king, scepter)" in out
    code, out, _ = run(capsys, "parse", FIX / "palace.setting", "--snapshot")
    assert json.loads(out)["version"] == 1


def test_parse_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.setting"
    bad.write_text("_task_name t\n")
    code, _, err = run(capsys, "parse", bad)
    assert code == EXIT_INVALID and "validation error" in err
    code, _, err = run(capsys, "parse", tmp_path / "missing.setting")
    assert code == EXIT_RUNTIME


def test_ingest_and_replay(capsys, tmp_path):
    code, out, _ = run(capsys, "ingest", FIX / "episodes_valid.jsonl")
    assert code == EXIT_OK and json.loads(out)["counts"]["unseen_test"] == 2
    code, out, err = run(capsys, "ingest", FIX / "episodes_bad.jsonl")
    assert code == EXIT_INVALID and json.loads(out)["n_errors"] == 8 and "line 2" in err
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert run(capsys, "ingest", empty)[0] == EXIT_OK
    code, out, _ = run(capsys, "replay", FIX / "episodes_valid.jsonl", "--snapshots")
    rows = json_lines(out)
    assert code == EXIT_OK and len(rows) == 8 and all(r["completed"] for r in rows)
    assert len(rows[0]["snapshots"]) == rows[0]["turns"] + 1


def test_replay_infeasible_gold_exit_one(capsys, tmp_path):
    doc = json.loads((FIX / "episodes_valid.jsonl").read_text().splitlines()[0])
    me = doc["setting"]["self_agent"]["name"]
    doc["turns"] = [{"speaker": me, "kind": "action", "text": "eat " + me}]
    path = tmp_path / "x.jsonl"
    path.write_text(json.dumps(doc) + "\n")
    code, out, _ = run(capsys, "replay", path)
    assert code == EXIT_INVALID and json_lines(out)[0]["completed"] is False
    code, out, _ = run(capsys, "replay", path, "--mode", "lenient")
    assert code == EXIT_OK and json_lines(out)[0]["events"]


def test_generate_convert(capsys, tmp_path):
    out_path = tmp_path / "syn.jsonl"
    code, out, _ = run(capsys, "generate", out_path, "--n", 6, "--seed", 1)
    assert code == EXIT_OK and json.loads(out)["written"] == 6
    assert run(capsys, "ingest", out_path)[0] == EXIT_OK
    code, out, _ = run(capsys, "convert-light", FIX / "light_dump.jsonl", tmp_path / "light.jsonl",
                       "--n-candidates", 4)
    summary = json.loads(out)
    assert code == EXIT_OK and summary["written"] == 2 and summary["counts"]["valid"] == 1


def test_train_eval_report_writes_figures(capsys, tmp_path):
    cfg = tmp_path / "small.conf"
    cfg.write_text(SMALL)
    out_dir = tmp_path / "run"
    code, out, _ = run(capsys, "train", "--config", cfg, "--synthetic", 12, "--epochs", 1, "--out", out_dir)
    assert code == EXIT_OK
    assert (out_dir / "model.npz").exists() and (out_dir / "training.png").stat().st_size > 0
    assert len((out_dir / "train_metrics.jsonl").read_text().splitlines()) == 1
    code, out, _ = run(capsys, "eval", "--config", cfg, "--checkpoint", out_dir / "model.npz",
                       "--synthetic", 12, "--utility", "both", "--graph", "all", "--out", out_dir)
    assert code == EXIT_OK and "continuous" in out and "utterance" in out
    rows = [json.loads(l) for l in (out_dir / "metrics.jsonl").read_text().splitlines()]
    assert len(rows) == 3 * 2 * 2 * 3
    assert (out_dir / "eval.png").stat().st_size > 0 and (out_dir / "table.txt").exists()
    # a checkpoint from another config is refused
    other = tmp_path / "other.conf"
    other.write_text(SMALL.replace("dim = 16", "dim = 8"))
    code, _, err = run(capsys, "eval", "--config", other, "--checkpoint", out_dir / "model.npz",
                       "--synthetic", 12)
    assert code == EXIT_INVALID


def test_score_utility(capsys):
    code, out, _ = run(capsys, "score-utility", "--context", "The cook said: the soup spilled on the floor",
                       "--candidates", "laugh at the cook", "mop up the floor", "nod")
    assert code == EXIT_OK and json.loads(out)["chosen"] == 1
    with MockScorerServer("ok") as srv:
        code, out, _ = run(capsys, "score-utility", "--context", "x", "--candidates", "a", "bbb", "cc",
                           "--scorer", "remote", "--endpoint", srv.url)
    assert code == EXIT_OK and json.loads(out)["candidate"] == "bbb"
    code, _, _ = run(capsys, "score-utility", "--context", "x", "--candidates", "a", "b", "c",
                     "--scorer", "remote")
    assert code == EXIT_INVALID


def test_play_from_stdin(capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO("do get royal crown\nquit\n"))
    code, out, err = run(capsys, "play", FIX / "palace.setting")
    assert code == EXIT_OK, err
    assert "+ carrying(king, royal crown)" in out


def test_evaluate_is_pure_and_table():
    model = AgentModel(ModelConfig(dim=16, layers=2, n_slots=8, gru_hidden=16, scorer_hidden=16, n_buckets=512))
    eps = generate_synthetic(n_episodes=6, seed=2)
    a = evaluate(model, eps, EvalFlags(mask_on=True))
    assert a == evaluate(model, eps, EvalFlags(mask_on=True))
    assert 0.0 <= lookup(a, "action", mask=True) <= 1.0
    with pytest.raises(ValueError):
        evaluate(model, eps, EvalFlags(utility_on=True))
    assert len(flag_grid((False, True), (False, True), ("discrete", "hybrid"))) == 8
    assert "action" in format_table(a)
