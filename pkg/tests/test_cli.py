import json
import re
import subprocess
import sys
import time
import urllib.request

import pytest

from tpgn.cli import main

CORPUS_ARGS = ["--train-range", "0:40", "--val-range", "2000:2010",
               "--test-range", "2200:2210"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    assert main(["gen-corpus", "--out", str(corpus)] + CORPUS_ARGS) == 0
    ckpt = root / "model.json"
    assert main(["train", "--corpus", str(corpus), "--out", str(ckpt),
                 "--epochs", "2", "--d", "3", "--seed", "0"]) == 0
    return root


class TestGenCorpus:
    def test_byte_identical_across_runs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["gen-corpus", "--out", str(out)] + CORPUS_ARGS) == 0
        for name in ("train.json", "val.json", "test.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_manifest_written(self, workdir):
        doc = json.loads(
            (workdir / "corpus" / "gen_corpus.manifest.json").read_text())
        assert doc["command"] == "gen-corpus"
        assert all(h.startswith("sha256:") for h in doc["outputs"].values())


class TestTrain:
    def test_checkpoint_and_log_exist(self, workdir):
        assert (workdir / "model.json").is_file()
        log = (workdir / "model.log.tsv").read_text().strip().splitlines()
        assert len(log) == 2
        for line in log:
            epoch, loss, wall = line.split("\t")
            int(epoch), float(loss), float(wall)

    def test_manifest(self, workdir):
        doc = json.loads((workdir / "train.manifest.json").read_text())
        assert doc["seed"] == 0
        assert str(workdir / "model.json") in doc["outputs"]

    def test_missing_corpus_is_clear_error(self, tmp_path):
        with pytest.raises(SystemExit, match="corpus split not found"):
            main(["train", "--corpus", str(tmp_path / "nope"),
                  "--out", str(tmp_path / "m.json")])


class TestCaption:
    def test_caption_by_index(self, workdir, capsys):
        assert main(["caption", "--checkpoint", str(workdir / "model.json"),
                     "--corpus", str(workdir / "corpus"),
                     "--split", "test", "--index", "0"]) == 0
        out = capsys.readouterr().out.strip()
        assert isinstance(out, str)

    def test_caption_by_seed(self, workdir, capsys, tmp_path):
        svg_path = tmp_path / "scene.svg"
        assert main(["caption", "--checkpoint", str(workdir / "model.json"),
                     "--corpus", str(workdir / "corpus"),
                     "--seed", "12345", "--show-tuples",
                     "--svg-out", str(svg_path)]) == 0
        assert "gold:" in capsys.readouterr().out
        assert svg_path.read_text().startswith("<svg")

    def test_missing_checkpoint(self, workdir):
        with pytest.raises(SystemExit, match="checkpoint not found"):
            main(["caption", "--checkpoint", str(workdir / "nope.json"),
                  "--corpus", str(workdir / "corpus")])


class TestEval:
    def test_table_format(self, workdir, capsys):
        out_path = workdir / "eval.tsv"
        assert main(["eval", "--checkpoint", str(workdir / "model.json"),
                     "--corpus", str(workdir / "corpus"),
                     "--splits", "test", "--out", str(out_path)]) == 0
        lines = out_path.read_text().strip().splitlines()
        assert lines[0].split("\t") == ["split", "n", "BLEU-1", "BLEU-2",
                                        "BLEU-3", "BLEU-4", "spice_lite"]
        row = lines[1].split("\t")
        assert row[0] == "test" and row[1] == "10"
        for cell in row[2:]:
            assert 0.0 <= float(cell) <= 1.0


class TestClusterRoles:
    def test_report(self, workdir, capsys):
        assert main(["cluster-roles",
                     "--checkpoint", str(workdir / "model.json"),
                     "--corpus", str(workdir / "corpus"),
                     "--split", "train", "--n", "40", "--k", "3"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["k"] == 3
        assert 0.0 <= doc["purity"] <= 1.0


class TestBuildPool:
    def test_untrained_model_pools_everything(self, workdir, tmp_path):
        # 2-epoch model is still bad: the whole split qualifies
        pool_path = tmp_path / "pool.json"
        assert main(["build-pool",
                     "--checkpoint", str(workdir / "model.json"),
                     "--corpus", str(workdir / "corpus"),
                     "--split", "test", "--pool-min-size", "1",
                     "--out", str(pool_path)]) == 0
        doc = json.loads(pool_path.read_text())
        assert len(doc["entries"]) >= 1
        for e in doc["entries"]:
            assert e["model_score"] < 0.04

    def test_impossible_pool_suggests_widening(self, workdir, tmp_path):
        with pytest.raises(SystemExit, match="extra-range"):
            main(["build-pool",
                  "--checkpoint", str(workdir / "model.json"),
                  "--corpus", str(workdir / "corpus"),
                  "--split", "test", "--pool-min-size", "500",
                  "--out", str(tmp_path / "pool.json")])


class TestPretrain:
    def test_smoke_and_chaining(self, workdir, tmp_path):
        pre = tmp_path / "pre.json"
        assert main(["pretrain", "--corpus", str(workdir / "corpus"),
                     "--out", str(pre), "--epochs", "1", "--d", "3",
                     "--seed", "0"]) == 0
        assert pre.is_file()
        log = pre.with_suffix(".log.tsv").read_text().strip().splitlines()
        assert len(log) == 1
        # the warm checkpoint initializes main training
        out = tmp_path / "warmed.json"
        assert main(["train", "--corpus", str(workdir / "corpus"),
                     "--init", str(pre), "--out", str(out),
                     "--epochs", "1"]) == 0
        assert out.is_file()


class TestServe:
    def test_serves_pool_over_http(self, workdir, tmp_path):
        pool_path = tmp_path / "pool.json"
        assert main(["build-pool",
                     "--checkpoint", str(workdir / "model.json"),
                     "--corpus", str(workdir / "corpus"),
                     "--split", "test", "--pool-min-size", "1",
                     "--out", str(pool_path)]) == 0
        proc = subprocess.Popen(
            [sys.executable, "-u", "-m", "tpgn.cli", "serve",
             "--pool", str(pool_path), "--port", "0", "--ttl", "30"],
            stdout=subprocess.PIPE, text=True)
        try:
            line = proc.stdout.readline()
            port = int(re.search(r":(\d+)/", line).group(1))
            deadline = time.time() + 10
            doc = None
            while time.time() < deadline:
                try:
                    with urllib.request.urlopen(
                            f"http://127.0.0.1:{port}/api/health") as resp:
                        doc = json.loads(resp.read())
                    break
                except OSError:
                    time.sleep(0.1)
            assert doc is not None and doc["pool_size"] >= 1
        finally:
            proc.terminate()
            proc.wait(timeout=10)


class TestConfigPrecedence:
    def test_flags_beat_file(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"epochs": 7, "learning_rate": 0.9}))
        corpus = tmp_path / "corpus"
        assert main(["gen-corpus", "--out", str(corpus)] + CORPUS_ARGS) == 0
        ckpt = tmp_path / "m.json"
        assert main(["train", "--corpus", str(corpus), "--out", str(ckpt),
                     "--config", str(cfg_file), "--epochs", "1",
                     "--d", "3"]) == 0
        log = (tmp_path / "m.log.tsv").read_text().strip().splitlines()
        assert len(log) == 1  # flag epochs=1 overrode file epochs=7
        doc = json.loads((tmp_path / "train.manifest.json").read_text())
        assert doc["config"]["learning_rate"] == 0.9  # file beat default
