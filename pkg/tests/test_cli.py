import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from semnav.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rc = main(["gen-scenes", "--count", "2", "--seed", "50", "--dims", "48", "48", "--rooms", "1",
               "--out", str(root / "scenes"), "--prior-graph", str(root / "prior.json")])
    assert rc == 0
    return root


def _eval(ws, *extra, out="out"):
    return main(["eval", "--scenes", str(ws / "scenes"), "--prior-graph", str(ws / "prior.json"),
                 "--output-dir", str(ws / out), "--N", "1", "2", "--M", "1", *extra])


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_gen_scenes_writes_files(workspace):
    assert len(list((workspace / "scenes").glob("*.json"))) == 2
    assert json.loads((workspace / "prior.json").read_text())


def test_eval_writes_report(workspace, capsys):
    assert _eval(workspace, "--records", str(workspace / "rec")) == 0
    out = capsys.readouterr().out
    assert "SR" in out and "report:" in out
    rows = _rows(workspace / "out" / "report.csv")
    assert len(rows) == 4 and all(r["status"] == "ok" for r in rows)
    assert json.loads((workspace / "out" / "effective_config.json").read_text())["paths"]["prior_graph"]
    assert len(list((workspace / "rec").glob("*.json"))) == 4


def test_eval_is_deterministic(workspace):
    assert _eval(workspace, out="again") == 0
    assert (workspace / "again" / "report.csv").read_bytes() == (workspace / "out" / "report.csv").read_bytes()


def test_no_comm_sends_nothing(workspace):
    assert _eval(workspace, "--no-comm", out="nocomm") == 0
    rows = _rows(workspace / "nocomm" / "report.csv")
    assert {r["variant"] for r in rows} == {"greedy+no-comm"}
    assert all(r["bandwidth_total"] == "0" for r in rows)


def test_replay_text_and_svg(workspace, capsys):
    rec = sorted((workspace / "rec").glob("*.json"))[0]
    assert main(["replay", str(rec)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("round 0")
    svg = workspace / "r.svg"
    assert main(["replay", str(rec), "--format", "svg", "--out", str(svg)]) == 0
    assert ET.parse(svg).getroot().tag.endswith("svg")


def test_train_writes_checkpoint_and_eval_uses_it(workspace):
    out = workspace / "train"
    assert main(["train", "--scenes", str(workspace / "scenes"), "--epochs", "1", "--episodes-per-epoch", "1",
                 "--output-dir", str(out)]) == 0
    rows = _rows(out / "training.csv")
    assert [r["kind"] for r in rows] == ["policy_mean_return"]
    ckpt = out / "policy.ckpt"
    assert ckpt.read_bytes()[:4] == b"SNPC"
    assert _eval(workspace, "--policy", "learned", "--checkpoint", str(ckpt), out="learned") == 0
    assert {r["variant"] for r in _rows(workspace / "learned" / "report.csv")} == {"learned"}


@pytest.mark.parametrize("argv,code", [
    (["eval", "--policy", "learned", "--scenes", "."], 1),  # no checkpoint
    (["eval", "--scenes", "/nonexistent"], 1),
    (["eval", "--N", "9", "--scenes", "."], 1),
    (["replay", "/nonexistent.json"], 1),
    (["train", "--scenes", ".", "--config", "/nonexistent.toml"], 1),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code
    assert "error" in capsys.readouterr().err


def test_usage_error_exits_1(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["gen-scenes"])
    assert ei.value.code == 1


def test_missing_checkpoint_message(workspace, capsys):
    assert _eval(workspace, "--policy", "learned", "--checkpoint", str(workspace / "none.ckpt")) == 1
    assert "semnav train" in capsys.readouterr().err


def test_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "semnav.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "gen-scenes" in r.stdout
