import csv
import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from nnfuzz import campaign, checkpoint
from nnfuzz.cli import load_image_dataset, main
from nnfuzz.models.mlp import accuracy


def _same_tree(a: Path, b: Path, ignore=("run.json",)):
    cmp = filecmp.dircmp(a, b, ignore=list(ignore))
    stack = [cmp]
    while stack:
        c = stack.pop()
        assert not c.left_only and not c.right_only, (c.left_only, c.right_only)
        _, mismatch, errors = filecmp.cmpfiles(c.left, c.right, c.common_files, shallow=False)
        assert not mismatch and not errors, mismatch
        stack.extend(c.subdirs.values())


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["data", "--out", str(d / "data"), "--text-size", "4000"]) == 0
    assert main(["train", "--experiment", "quant", "--data", str(d / "data/digits.npz"), "--out", str(d / "q.ckpt"),
                 "--steps", "300", "--hidden", "32"]) == 0
    assert main(["train", "--experiment", "text", "--data", str(d / "data/corpus.txt"), "--out", str(d / "t.ckpt"),
                 "--steps", "30", "--hidden", "16"]) == 0
    assert main(["seeds", "--experiment", "quant", "--data", str(d / "data/digits.npz"), "--out", str(d / "qs"),
                 "-n", "4"]) == 0
    assert main(["seeds", "--experiment", "text", "--data", str(d / "data/corpus.txt"), "--out", str(d / "ts"),
                 "-n", "2"]) == 0
    return d


def _quant(work, out, *extra):
    return main(["fuzz", "--experiment", "quant", "--checkpoint", str(work / "q.ckpt"), "--seeds", str(work / "qs"),
                 "--out", str(out), "-N", "15", *extra])


def test_data_files(work):
    xtr, ytr, xte, yte = load_image_dataset(work / "data/digits.npz")
    assert xtr.shape[1] == 64 and len(xtr) + len(xte) == 1797
    assert len((work / "data/corpus.txt").read_text()) == 4000


def test_train_is_deterministic(work, tmp_path):
    out = tmp_path / "again.ckpt"
    main(["train", "--experiment", "quant", "--data", str(work / "data/digits.npz"), "--out", str(out),
          "--steps", "300", "--hidden", "32"])
    assert out.read_bytes() == (work / "q.ckpt").read_bytes()


def test_train_accuracy_recorded(work):
    model, info = checkpoint.load(work / "q.ckpt")
    _, _, xte, yte = load_image_dataset(work / "data/digits.npz")
    assert info["test_accuracy"] == accuracy(model, xte, yte)


@pytest.mark.parametrize("content", [b"not an archive", None])
def test_train_refuses_malformed_dataset(tmp_path, content, capsys):
    bad = tmp_path / "bad.npz"
    if content is None:
        np.savez(bad, x_train=np.zeros((3, 4)), y_train=np.zeros(2, dtype=int), x_test=np.zeros((1, 4)),
                 y_test=np.zeros(1, dtype=int))
    else:
        bad.write_bytes(content)
    assert main(["train", "--experiment", "nan", "--data", str(bad), "--out", str(tmp_path / "x.ckpt")]) == 1
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "x.ckpt").exists()


def test_pixels_out_of_range_refused(tmp_path):
    bad = tmp_path / "bad.npz"
    np.savez(bad, x_train=np.full((3, 4), 2.0), y_train=np.zeros(3, dtype=int), x_test=np.zeros((1, 4)),
             y_test=np.zeros(1, dtype=int))
    assert main(["train", "--experiment", "quant", "--data", str(bad), "--out", str(tmp_path / "x.ckpt")]) == 1


def test_fuzz_layout_and_replay(work, tmp_path):
    out = tmp_path / "run"
    assert _quant(work, out, "--no-stop-on-first", "--sigma", "0.3") == 0
    for name in ("config.json", "seeds", "corpus", "testcases", "trace.csv", "coverage", "run.json"):
        assert (out / name).exists(), name
    with open(out / "trace.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["iteration", "corpus_size", "testcases"] and len(rows) == 16
    corpus = campaign.payload_files(out / "corpus")
    assert len(corpus) == int(rows[-1][1])
    side = json.loads(corpus[-1].with_suffix(".json").read_text())
    assert set(side) >= {"id", "parent_id", "seed_ancestor_id", "t_k"}
    assert main(["fuzz", "--config", str(out / "config.json"), "--out", str(tmp_path / "again")]) == 0
    _same_tree(out, tmp_path / "again")


def test_fuzz_refuses_non_empty_out(work, tmp_path):
    (tmp_path / "x").mkdir()
    (tmp_path / "x" / "f").write_text("")
    assert _quant(work, tmp_path / "x") == 1


def test_baseline_keeps_corpus(work, tmp_path):
    out = tmp_path / "base"
    assert main(["baseline", "--experiment", "quant", "--checkpoint", str(work / "q.ckpt"), "--seeds",
                 str(work / "qs"), "--out", str(out), "-N", "10"]) == 0
    assert {r[1] for r in campaign.read_trace(out / "trace.csv")} == {4}
    assert json.loads((out / "config.json").read_text())["fuzz"]["mode"] == "random"
    assert not (out / "coverage").exists()


def test_repeat_derives_seeds(work, tmp_path):
    out = tmp_path / "rep"
    assert _quant(work, out, "--repeat", "3", "--seed", "5") == 0
    seeds = [json.loads((out / f"run_{i:03d}/config.json").read_text())["fuzz"]["seed"] for i in range(3)]
    assert seeds == [5, 6, 7]
    assert json.loads((out / "campaign.json").read_text())["runs"] == ["run_000", "run_001", "run_002"]


def test_per_seed_sub_runs(work, tmp_path):
    out = tmp_path / "per"
    assert _quant(work, out, "--per-seed") == 0
    runs = campaign.run_dirs(out)
    assert [r.name for r in runs] == [f"seed_{j:03d}" for j in range(4)]
    assert all(len(campaign.payload_files(r / "seeds")) == 1 for r in runs)


def test_resume_matches_longer_run(work, tmp_path):
    assert _quant(work, tmp_path / "short", "--no-stop-on-first") == 0
    assert main(["fuzz", "--resume", str(tmp_path / "short"), "-N", "30"]) == 0
    assert main(["fuzz", "--experiment", "quant", "--checkpoint", str(work / "q.ckpt"), "--seeds", str(work / "qs"),
                 "--out", str(tmp_path / "long"), "-N", "30", "--no-stop-on-first"]) == 0
    _same_tree(tmp_path / "short", tmp_path / "long")


def test_text_campaign(work, tmp_path):
    bl = tmp_path / "bl.txt"
    bl.write_text("the\nking\n")
    out = tmp_path / "text"
    assert main(["fuzz", "--experiment", "text", "--checkpoint", str(work / "t.ckpt"), "--seeds", str(work / "ts"),
                 "--out", str(out), "-N", "3", "--batch-size", "8", "--blacklist", str(bl),
                 "--sample-length", "30"]) == 0
    files = campaign.payload_files(out / "corpus")
    assert files[0].suffix == ".txt"
    assert files[0].read_text() == (work / "ts/000000.txt").read_text()
    report = campaign.build_report(out)
    tc = campaign.payload_files(out / "testcases")
    assert report.runs[0].testcases == len(tc)
    assert set(report.blacklist_words) <= {"the", "king"}


def test_report_empty_campaign(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "runs: 0" in out and "0/0" in out


def test_report_success_rate_matches_files(work, tmp_path, capsys):
    out = tmp_path / "per"
    main(["fuzz", "--experiment", "quant", "--checkpoint", str(work / "q.ckpt"), "--seeds", str(work / "qs"),
          "--out", str(out), "-N", "40", "--per-seed", "--sigma", "0.4"])
    capsys.readouterr()
    hand = sum(1 for r in campaign.run_dirs(out) if any((r / "testcases").iterdir()))
    csv_path = tmp_path / "merged.csv"
    assert main(["report", str(out), "--csv", str(csv_path)]) == 0
    text = capsys.readouterr().out
    assert f"success rate: {hand}/4" in text
    assert "model test accuracy" in text
    with open(csv_path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["run", "iteration", "corpus_size", "testcases"]
    assert {r[0] for r in rows[1:]} == {f"seed_{j:03d}" for j in range(4)}


def test_report_flags_shrinking_corpus(work, tmp_path, capsys):
    out = tmp_path / "run"
    _quant(work, out, "--no-stop-on-first")
    rows = (out / "trace.csv").read_text().splitlines()
    rows[-1] = rows[-1].split(",")[0] + ",1," + rows[-1].split(",")[2]
    (out / "trace.csv").write_text("\n".join(rows) + "\n")
    before = {p: p.read_bytes() for p in out.rglob("*") if p.is_file()}
    assert main(["report", str(out)]) == 2
    assert "non-decreasing: NO" in capsys.readouterr().out
    assert before == {p: p.read_bytes() for p in out.rglob("*") if p.is_file()}


class _Exploding:
    def validate(self, payload):
        pass

    def evaluate_batch(self, inputs):
        if len(inputs) == 2:
            raise FloatingPointError("boom")
        return np.zeros((len(inputs), 3)), [None] * len(inputs)


def test_crash_persists_offending_batch(work, tmp_path, monkeypatch):
    monkeypatch.setattr(campaign, "make_target", lambda *a, **k: _Exploding())
    out = tmp_path / "run"
    code = main(["fuzz", "--experiment", "quant", "--checkpoint", str(work / "q.ckpt"), "--seeds", str(work / "qs"),
                 "--out", str(out), "-N", "5", "--batch-size", "2"])
    assert code == 3
    assert len(campaign.payload_files(out / "crash")) == 2
    assert "boom" in (out / "crash/error.log").read_text()
