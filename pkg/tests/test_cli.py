import csv
import json

import pytest

from mdm_spam.cli import main

SMALL = ["--d", "4", "--n", "2", "--k", "1", "--L", "1", "--epochs", "3",
         "--embed-epochs", "2"]


def _header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--users", "300", "--spam", "0.1", "--seed", "7",
                 "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def model_dir(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", "--events", str(corpus_dir / "events.csv"),
                 "--labels", str(corpus_dir / "labels.csv"), "--out", str(out), *SMALL]) == 0
    return out


def test_synth_writes_two_files_and_config(corpus_dir):
    assert (corpus_dir / "events.csv").exists() and (corpus_dir / "labels.csv").exists()
    cfg = json.loads((corpus_dir / "config.json").read_text())
    assert cfg["command"] == "synth" and cfg["users"] == 300 and cfg["seed"] == 7


def test_synth_rerun_identical(corpus_dir, tmp_path):
    assert main(["synth", "--users", "300", "--spam", "0.1", "--seed", "7",
                 "--out", str(tmp_path)]) == 0
    for name in ("events.csv", "labels.csv"):
        assert (tmp_path / name).read_bytes() == (corpus_dir / name).read_bytes()
    a, b = (json.loads((d / "config.json").read_text()) for d in (tmp_path, corpus_dir))
    assert a.pop("out") != b.pop("out") and a == b


def test_missing_out_is_usage_error(capsys):
    assert main(["synth", "--seed", "1"]) == 2
    assert "--out" in capsys.readouterr().err


def test_bad_flag_is_usage_error():
    assert main(["synth", "--out", "x", "--window", "sideways"]) == 2
    assert main([]) == 2


def test_train_outputs(model_dir):
    assert (model_dir / "model.mdm").read_bytes()[:4] == b"MDM1"
    lines = (model_dir / "loss_trace.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_pair_loss,frobenius_term" and len(lines) == 4
    assert json.loads((model_dir / "config.json").read_text())["d"] == 4


def test_train_repeat_identical_checkpoint(corpus_dir, model_dir, tmp_path):
    assert main(["train", "--events", str(corpus_dir / "events.csv"),
                 "--labels", str(corpus_dir / "labels.csv"), "--out", str(tmp_path),
                 *SMALL]) == 0
    assert (tmp_path / "model.mdm").read_bytes() == (model_dir / "model.mdm").read_bytes()


def test_train_single_class_is_domain_error(corpus_dir, tmp_path, capsys):
    labels = tmp_path / "labels.csv"
    labels.write_text("user_id,label\n0,0\n1,0\n2,0\n")
    assert main(["train", "--events", str(corpus_dir / "events.csv"),
                 "--labels", str(labels), "--out", str(tmp_path / "o"), *SMALL]) == 1
    assert "both" in capsys.readouterr().err


def test_config_file_with_flag_override(corpus_dir, tmp_path):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"d": 3, "n": 2, "k": 1, "L": 1, "epochs": 1,
                                "embed_epochs": 1, "lam": 0.5}))
    assert main(["train", "--config", str(conf), "--events", str(corpus_dir / "events.csv"),
                 "--labels", str(corpus_dir / "labels.csv"), "--out", str(tmp_path / "o"),
                 "--d", "2"]) == 0
    echoed = json.loads((tmp_path / "o" / "config.json").read_text())
    assert echoed["d"] == 2 and echoed["lam"] == 0.5 and echoed["epochs"] == 1


@pytest.mark.parametrize("which,width", [("kgram", 49), ("graph", 56)])
def test_feature_widths(corpus_dir, tmp_path, which, width):
    assert main(["features", "--events", str(corpus_dir / "events.csv"),
                 "--labels", str(corpus_dir / "labels.csv"), "--which", which,
                 "--out", str(tmp_path)]) == 0
    header = _header(tmp_path / "features.csv")
    assert header[0] == "user" and len(header) == 1 + width


def test_all_features_concatenate(corpus_dir, model_dir, tmp_path):
    args = ["features", "--events", str(corpus_dir / "events.csv"),
            "--labels", str(corpus_dir / "labels.csv"), "--which", "all",
            "--checkpoint", str(model_dir / "model.mdm"), "--out", str(tmp_path)]
    assert main(args) == 0
    assert len(_header(tmp_path / "features.csv")) == 1 + 49 + 56 + 3 * 4
    first = (tmp_path / "features.csv").read_bytes()
    assert main(args) == 0
    assert (tmp_path / "features.csv").read_bytes() == first


def test_mdm_features_need_checkpoint(corpus_dir, tmp_path):
    assert main(["features", "--events", str(corpus_dir / "events.csv"),
                 "--which", "mdm", "--out", str(tmp_path)]) == 2


def test_eval_leaked_label(corpus_dir, tmp_path):
    labels = {}
    with open(corpus_dir / "labels.csv") as fh:
        for row in list(csv.reader(fh))[1:]:
            labels[int(row[0])] = int(row[1])
    feats = tmp_path / "f.csv"
    feats.write_text("user,leak\n" + "".join(f"{u},{y}\n" for u, y in labels.items()))
    assert main(["eval", "--features", str(feats), "--labels", str(corpus_dir / "labels.csv"),
                 "--seeds", "4", "--out", str(tmp_path / "e")]) == 0
    rows = (tmp_path / "e" / "metrics.csv").read_text().splitlines()
    assert rows[0] == "features,seed,precision,recall,f_measure"
    body = [r.split(",") for r in rows[1:]]
    assert len(body) == 4 + 2
    assert all(float(r[4]) == 1.0 for r in body if r[1] != "std")


def test_eval_reports_each_family(corpus_dir, model_dir, tmp_path):
    assert main(["features", "--events", str(corpus_dir / "events.csv"),
                 "--labels", str(corpus_dir / "labels.csv"), "--which", "all",
                 "--checkpoint", str(model_dir / "model.mdm"), "--out", str(tmp_path)]) == 0
    args = ["eval", "--features", str(tmp_path / "features.csv"),
            "--labels", str(corpus_dir / "labels.csv"), "--seeds", "2",
            "--out", str(tmp_path / "e")]
    assert main(args) == 0
    text = (tmp_path / "e" / "metrics.csv").read_text()
    families = {line.split(",")[0] for line in text.splitlines()[1:]}
    assert families == {"mdm", "kgram", "graph", "all"}
    assert main(args) == 0
    assert (tmp_path / "e" / "metrics.csv").read_text() == text


def test_eval_missing_file_is_domain_error(tmp_path):
    assert main(["eval", "--features", str(tmp_path / "none.csv"),
                 "--labels", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 1
