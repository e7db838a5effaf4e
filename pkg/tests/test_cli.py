import json

import numpy as np
import pytest

from ctxrank import checkpoint
from ctxrank.cli import ABLATION_ROWS, main
from ctxrank.data import load_records

from conftest import small_evaluator, small_generator

CONFIG = {"sim": {"num_users": 40, "num_items": 50, "num_categories": 3, "num_records": 200,
                  "m": 6, "n": 3},
          "train": {"evaluator_epochs": 2, "generator_epochs": 2, "batch_size": 32},
          "evaluator": {"embed_dim": 4, "hidden": 8, "mlp": [16, 8]},
          "generator": {"embed_dim": 4, "hidden": 8, "mlp": [16, 8]}}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "cfg.json").write_text(json.dumps(CONFIG))
    base = ["--config", str(root / "cfg.json"), "--seed", "5"]
    assert main(["simulate", *base, "--out", str(root / "data")]) == 0
    data = root / "data"
    assert main(["train", *base, "--stage", "evaluator", "--train", str(data / "train.jsonl"),
                 "--val", str(data / "val.jsonl"), "--out", str(root / "models")]) == 0
    assert main(["train", *base, "--stage", "generator", "--train", str(data / "train.jsonl"),
                 "--val", str(data / "val.jsonl"), "--evaluator", str(root / "models/evaluator.json"),
                 "--out", str(root / "models")]) == 0
    return root, base


def lines(path):
    return path.read_text().splitlines()


def test_simulate_writes_requested_records(workdir):
    root, _ = workdir
    counts = [len(lines(root / "data" / f"{s}.jsonl")) for s in ("train", "val", "test")]
    assert sum(counts) == 200 and all(counts)
    for s, c in zip(("train", "val", "test"), counts):
        assert len(lines(root / "data" / f"{s}.truth.jsonl")) == c + 1  # header line


def test_simulate_is_byte_identical(workdir, tmp_path):
    root, base = workdir
    assert main(["simulate", *base, "--out", str(tmp_path)]) == 0
    for s in ("train", "val", "test"):
        assert (tmp_path / f"{s}.jsonl").read_bytes() == (root / "data" / f"{s}.jsonl").read_bytes()
        assert (tmp_path / f"{s}.truth.jsonl").read_bytes() == \
            (root / "data" / f"{s}.truth.jsonl").read_bytes()


def test_invalid_config_names_field(tmp_path, capsys):
    assert main(["simulate", "--seed", "1", "--gamma", "1.5", "--out", str(tmp_path)]) != 0
    assert "gamma" in capsys.readouterr().err
    (tmp_path / "bad.json").write_text(json.dumps({"sim": {"bogus_field": 1}}))
    assert main(["simulate", "--seed", "1", "--config", str(tmp_path / "bad.json"),
                 "--out", str(tmp_path)]) == 2
    assert "bogus_field" in capsys.readouterr().err


def test_seed_is_required(tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == 1


def test_usage_errors_exit_one(workdir):
    root, base = workdir
    assert main(["bogus"]) == 1
    assert main(["train", *base, "--stage", "generator",
                 "--train", str(root / "data/train.jsonl")]) == 1
    assert main(["train", *base, "--stage", "evaluator", "--train", str(root / "missing.jsonl")]) == 1


def test_bad_data_exits_two(workdir, tmp_path):
    _, base = workdir
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"user": {}}\n')
    assert main(["train", *base, "--stage", "evaluator", "--train", str(bad),
                 "--out", str(tmp_path)]) == 2


def test_metrics_log_has_consecutive_epochs(workdir):
    root, _ = workdir
    for stage in ("evaluator", "generator"):
        entries = [json.loads(x) for x in lines(root / "models" / f"{stage}_metrics.jsonl")]
        assert [e["epoch"] for e in entries] == [1, 2]
        assert all(e["stage"] == stage and "wall_time_s" in e for e in entries)


def test_training_is_reproducible(workdir, tmp_path):
    root, base = workdir
    data = root / "data"
    assert main(["train", *base, "--stage", "evaluator", "--train", str(data / "train.jsonl"),
                 "--val", str(data / "val.jsonl"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "evaluator.json").read_bytes() == (root / "models/evaluator.json").read_bytes()


def test_rerank_outputs(workdir, tmp_path):
    root, base = workdir
    args = ["rerank", *base, "--generator", str(root / "models/generator.json"),
            "--data", str(root / "data/test.jsonl")]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    first = (tmp_path / "a/reranked.jsonl").read_bytes()
    assert first == (tmp_path / "b/reranked.jsonl").read_bytes()
    records = load_records(root / "data/test.jsonl")
    out = [json.loads(x) for x in first.decode().splitlines()]
    assert len(out) == len(records)
    for rec, row in zip(records, out):
        assert len(row["order"]) == rec.n == len(row["probs"])
        assert set(row["order"]) <= set(range(rec.m))
        assert len(set(row["order"])) == rec.n


def test_rerank_reports_oversized_lists(workdir, tmp_path):
    root, base = workdir
    code = main(["rerank", *base, "--generator", str(root / "models/generator.json"),
                 "--data", str(root / "data/test.jsonl"), "--n", "7", "--out", str(tmp_path)])
    assert code == 2
    assert all("error" in json.loads(x) for x in lines(tmp_path / "reranked.jsonl"))


def test_evaluate_table(workdir, tmp_path, capsys):
    root, base = workdir
    args = ["evaluate", *base, "--evaluator", str(root / "models/evaluator.json"),
            "--generator", str(root / "models/generator.json"), "--data", str(root / "data/test.jsonl")]
    assert main(args + ["--truth", str(root / "data/test.truth.jsonl"), "--out", str(tmp_path)]) == 0
    table = capsys.readouterr().out.splitlines()
    assert [row.split()[0] for row in table[1:]] == ["evaluator", "recorded", "generator", "greedy"]
    assert "true_value@5" in table[0] and "lr@5" in table[0]
    reports = [json.loads(x) for x in lines(tmp_path / "report.jsonl")]
    assert all(r["k"] == 5 for r in reports)

    assert main(args + ["--truth", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "b")]) == 0
    assert "true_value" not in capsys.readouterr().out
    assert all(json.loads(x)["true_value_at_k"] is None for x in lines(tmp_path / "b/report.jsonl"))
    assert main(args + ["--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "b/report.jsonl").read_bytes() == (tmp_path / "c/report.jsonl").read_bytes()


def test_ablate_table_has_eight_rows(workdir, tmp_path, capsys):
    root, base = workdir
    data = root / "data"
    assert main(["ablate", *base, "--train", str(data / "train.jsonl"), "--val", str(data / "val.jsonl"),
                 "--test", str(data / "test.jsonl"), "--truth", str(data / "test.truth.jsonl"),
                 "--epochs", "1", "--out", str(tmp_path)]) == 0
    table = capsys.readouterr().out.splitlines()
    assert [row.split()[0] for row in table[1:]] == list(ABLATION_ROWS)
    rows = {json.loads(x)["name"]: json.loads(x) for x in lines(tmp_path / "ablation.jsonl")}
    assert rows["-BL"]["auc"] is not None and rows["-BL"]["lr_at_k"] is None
    assert rows["-SR"]["lr_at_k"] is not None and rows["Greedy"]["auc"] is None


def test_checkpoint_round_trip(tiny, tmp_path):
    records, _, fz = tiny
    ev, gen = small_evaluator(fz, seed=2), small_generator(fz, seed=2)
    checkpoint.save_evaluator(ev, tmp_path / "e.json")
    checkpoint.save_generator(gen, tmp_path / "g.json")
    ev2, gen2 = checkpoint.load_evaluator(tmp_path / "e.json"), checkpoint.load_generator(tmp_path / "g.json")
    batch = fz.encode(records)
    np.testing.assert_array_equal(ev2.forward_records(batch).probs.data, ev.forward_records(batch).probs.data)
    np.testing.assert_array_equal(gen2.generate(batch).step_probs, gen.generate(batch).step_probs)
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load_generator(tmp_path / "e.json")
