"""
Integration Tests
~~~~~~~~~~~~~~~~~
"""
import os

import numpy as np
import pytest

from cologic import cli, cooccur, dsl, ensemble, trainer
from cologic.constants import ConstraintMode

from .base import TINY_EXPERIMENT
from .base import CmdResult as R
from .base import run, write_json, write_vocab

ANNOTATIONS = "uid,verb_id,noun_id\na,0,0\nb,0,0\nc,1,2\n"


@pytest.fixture
def matrix_files(tmp_path):
    "A 2x3 vocabulary with three annotations and the matrix built from them."
    vocab = write_vocab(tmp_path / "vocab.json", 2, 3)
    annotations = tmp_path / "train.csv"
    annotations.write_text(ANNOTATIONS)
    out = str(tmp_path / "matrix.csv")
    result = run(
        ["build-matrix", "--annotations", annotations, "--vocab", vocab, "--out", out]
    )
    assert result == R(out="3 records, 2 of 6 pairs valid (33.33%)\n", err="")
    return vocab, out, str(tmp_path / "matrix.mask.csv")


def write_labels(path, labels):
    cooccur.write_annotations(
        [cooccur.Annotation(uid, v, n) for uid, (v, n) in labels.items()], str(path)
    )
    return str(path)


def write_model(path, name, rows):
    records = [ensemble.PredictionRecord(uid, v, n) for uid, v, n in rows]
    ensemble.write_predictions(ensemble.PredictionFile(name, 2, 2, records), str(path))
    return str(path)


#
# Exit codes
#


def test_usage_errors_exit_with_1(tmp_path):
    assert run("build-matrix --vocab v.json", exit=True) == 1
    assert run("no-such-command", exit=True) == 1
    assert run(["ablate", "--out", tmp_path, "--seeds", "0"], exit=True) == 1
    assert run(["heatmap", "--block", "x"], exit=True) == 1


def test_usage_error_message(tmp_path):
    result = run(["ablate", "--out", tmp_path, "--seeds", "0"])
    assert result.err == "error: --seeds must be at least 1\n"
    assert result.exit == 1


def test_malformed_config_exits_with_1(tmp_path):
    config = tmp_path / "exp.json"
    config.write_text("{ not json")
    result = run(["train", "--config", config, "--constraints", "none", "--out", "x"])
    assert result.exit == 1
    assert result.err.startswith("error: ")


def test_data_errors_exit_with_2(tmp_path):
    vocab = write_vocab(tmp_path / "vocab.json", 2, 3)
    missing = str(tmp_path / "missing.csv")
    out = str(tmp_path / "m.csv")
    args = ["build-matrix", "--vocab", vocab, "--out", out, "--annotations"]
    assert run(args + [missing], exit=True) == 2

    annotations = tmp_path / "train.csv"
    annotations.write_text("uid,verb_id,noun_id\na,0,0\nb,5,0\n")
    result = run(args + [annotations])
    assert result.exit == 2
    assert "record" in result.err
    assert not os.path.exists(out)


def test_network_errors_exit_with_3(tmp_path, monkeypatch):
    monkeypatch.delenv("COLOGIC_TEST_KEY", raising=False)
    vocab = write_vocab(tmp_path / "vocab.json", 2, 2)
    config = write_json(tmp_path / "oracle.json", {"api_key_env": "COLOGIC_TEST_KEY"})
    result = run(
        ["llm-matrix", "--vocab", vocab, "--config", config, "--out", tmp_path / "m"]
    )
    assert result.exit == 3
    assert "COLOGIC_TEST_KEY" in result.err


#
# Matrices and constraints
#


def test_build_matrix(matrix_files, tmp_path):
    vocab, matrix, mask = matrix_files
    counts = cooccur.load_csv(matrix)
    assert counts.counts.tolist() == [[2, 0, 0], [0, 0, 1]]
    assert cooccur.load_mask(mask).count() == 2

    args = ["--vocab", vocab, "--out", tmp_path / "m2.csv"]
    args += ["--annotations", tmp_path / "train.csv", "--min-count", "2"]
    args += ["--mask-out", tmp_path / "strict.csv"]
    result = run(["build-matrix"] + args)
    assert result.out == "3 records, 1 of 6 pairs valid (16.67%)\n"
    assert cooccur.load_mask(str(tmp_path / "strict.csv")).valid[0, 0]


@pytest.mark.parametrize("mode, count", [("invalid", 4), ("valid", 1)])
def test_gen_constraints(matrix_files, tmp_path, mode, count):
    _, _, mask = matrix_files
    out = str(tmp_path / "rules.lgc")
    result = run(["gen-constraints", "--mask", mask, "--mode", mode, "--out", out])
    assert result == R(out="{0} formulas written to {1}\n".format(count, out), err="")
    constraints = dsl.load(out)
    assert constraints.mode is ConstraintMode(mode)
    assert len(constraints) == count


def test_gen_constraints_rejects_unknown_mode(matrix_files, tmp_path):
    _, _, mask = matrix_files
    args = ["gen-constraints", "--mask", mask, "--mode", "all", "--out", "x"]
    assert run(args, exit=True) == 1


def test_heatmap(matrix_files, tmp_path):
    _, matrix, _ = matrix_files
    out = str(tmp_path / "map.pgm")
    args = ["--matrix", matrix, "--verbs", "0-1", "--nouns", "0,2", "--out", out]
    result = run(["heatmap"] + args + ["--block", "2"])
    assert result.out == "2x2 cells written to {0}\n".format(out)
    with open(out, "rb") as f:
        assert f.read().startswith(b"P5\n4 4\n255\n")
    assert run(["heatmap"] + args[:3] + ["0-5"] + args[4:], exit=True) == 2


#
# Oracle
#


def test_llm_matrix_with_mock(tmp_path):
    vocab = write_vocab(tmp_path / "vocab.json", 3, 3)
    cache = str(tmp_path / "cache.jsonl")
    config = write_json(tmp_path / "oracle.json", {"cache_path": cache})
    mock = write_json(
        tmp_path / "mock.json",
        {"rule": "upper", "overrides": [{"verb_id": 0, "noun_id": 1, "response": "?"}]},
    )
    out = str(tmp_path / "oracle.mask.csv")
    args = ["llm-matrix", "--vocab", vocab, "--config", config, "--out", out]
    result = run(args + ["--mock", mock])
    assert result.out == "5 of 9 pairs valid, 1 unknown\nunknown\tverb0\tnoun1\n"
    assert cooccur.load_mask(out).count() == 5

    # a warm cache answers without the mock
    result = run(args + ["--unknown-valid"])
    assert result.exit is None
    assert result.out.startswith("6 of 9 pairs valid, 1 unknown\n")


def test_llm_matrix_union(tmp_path):
    vocab = write_vocab(tmp_path / "vocab.json", 2, 2)
    config = write_json(tmp_path / "oracle.json", {})
    mock = write_json(tmp_path / "mock.json", {"rule": "identity"})
    other = str(tmp_path / "other.csv")
    cooccur.save_mask(cooccur.ValidityMask([[False, True], [False, False]]), other)
    out = str(tmp_path / "mask.csv")
    args = ["llm-matrix", "--vocab", vocab, "--config", config, "--out", out]
    result = run(args + ["--mock", mock, "--union", other])
    assert result.out == "3 of 4 pairs valid, 0 unknown\n"
    assert cooccur.load_mask(out).valid.tolist() == [[True, True], [False, True]]


#
# Predictions
#

LABELS = {"s0": (0, 0), "s1": (1, 1)}


def test_eval(tmp_path):
    labels = write_labels(tmp_path / "labels.csv", LABELS)
    pred = write_model(
        tmp_path / "a.jsonl",
        "a",
        [("s0", [0.9, 0.1], [0.8, 0.2]), ("s1", [0.6, 0.4], [0.3, 0.7])],
    )
    result = run(["eval", "--pred", pred, "--labels", labels, "--out", tmp_path / "r"])
    assert result.exit is None
    lines = dict(line.split("\t") for line in result.out.splitlines())
    assert list(lines) == list(trainer.Metrics.SCORES)
    assert lines["verb_top1"] == "0.5"
    assert lines["noun_top1"] == "1.0"
    assert trainer.read_report_csv(str(tmp_path / "r.csv"))[0].name == "a"


def test_eval_with_mask(tmp_path):
    labels = write_labels(tmp_path / "labels.csv", LABELS)
    pred = write_model(
        tmp_path / "a.jsonl",
        "a",
        [("s0", [0.9, 0.1], [0.8, 0.2]), ("s1", [0.6, 0.4], [0.3, 0.7])],
    )
    mask = str(tmp_path / "mask.csv")
    cooccur.save_mask(cooccur.ValidityMask([[True, False], [False, True]]), mask)
    result = run(["eval", "--pred", pred, "--labels", labels, "--mask", mask])
    lines = dict(line.split("\t") for line in result.out.splitlines())
    assert lines["action_top1"] == "1.0"
    assert lines["invalid_rate"] == "0.0"


def test_eval_uid_mismatch(tmp_path):
    labels = write_labels(tmp_path / "labels.csv", {"s0": (0, 0)})
    pred = write_model(tmp_path / "a.jsonl", "a", [("s9", [0.5, 0.5], [0.5, 0.5])])
    assert run(["eval", "--pred", pred, "--labels", labels], exit=True) == 2


def test_ensemble(tmp_path):
    first = write_model(
        tmp_path / "a.jsonl",
        "a",
        [("s0", [0.9, 0.1], [0.8, 0.2]), ("s1", [0.6, 0.4], [0.3, 0.7])],
    )
    second = write_model(
        tmp_path / "b.jsonl",
        "b",
        [("s1", [0.1, 0.9], [0.2, 0.8]), ("s0", [0.5, 0.5], [0.5, 0.5])],
    )
    out = str(tmp_path / "ens.jsonl")
    args = ["ensemble", "--inputs", first, second, "--weights", "1", "3"]
    result = run(args + ["--out", out, "--name", "both"])
    assert result == R(out="2 samples combined from 2 models\n", err="")
    combined = ensemble.read_predictions(out)
    assert combined.model == "both"
    assert combined.uids() == ["s0", "s1"]
    assert np.argmax(combined.records[1].action_scores) == 3

    assert run(args[:-1] + ["--out", out], exit=True) == 1
    geometric = run(args + ["--out", out, "--mode", "geometric"])
    assert geometric.exit is None


#
# Training
#


def test_train_and_evaluate(tmp_path):
    config = write_json(tmp_path / "exp.json", TINY_EXPERIMENT)
    out = tmp_path / "run"
    result = run(["train", "--config", config, "--constraints", "source", "--out", out])
    assert result.exit is None
    assert result.out.startswith("action top-1 ")
    for name in (
        "checkpoint/params.json",
        "checkpoint/model.json",
        "metrics.csv",
        "metrics.md",
        "history.csv",
        "predictions.jsonl",
        "target_labels.csv",
    ):
        assert (out / name).exists(), name
    assert trainer.read_report_csv(str(out / "metrics.csv"))[0].name == "Base+LR"
    history = (out / "history.csv").read_text().splitlines()
    assert len(history) == 1 + TINY_EXPERIMENT["train"]["epochs"]

    scored = run(
        [
            "eval",
            "--pred",
            out / "predictions.jsonl",
            "--labels",
            out / "target_labels.csv",
        ]
    )
    assert len(scored.out.splitlines()) == len(trainer.Metrics.SCORES)


def test_train_with_constraint_file(tmp_path):
    config = write_json(tmp_path / "exp.json", TINY_EXPERIMENT)
    rules = tmp_path / "rules.lgc"
    rules.write_text("!(verb:0 & noun:0)\n")
    out = tmp_path / "run"
    result = run(["train", "--config", config, "--constraints", rules, "--out", out])
    assert result.exit is None
    history = (out / "history.csv").read_text().splitlines()
    header = history[0].split(",")
    logic = [float(row.split(",")[header.index("logic")]) for row in history[1:]]
    assert all(value > 0 for value in logic)

    base = run(["train", "--config", config, "--constraints", "none", "--out", out])
    assert base.exit is None
    assert trainer.read_report_csv(str(out / "metrics.csv"))[0].name == "Base"


def test_ablate(tmp_path):
    config = write_json(tmp_path / "exp.json", TINY_EXPERIMENT)
    out = tmp_path / "ablation"
    result = run(["ablate", "--out", out, "--config", config, "--seeds", "1"])
    assert result.exit is None
    table = result.out.splitlines()
    assert table[0].startswith("| Model |")
    assert [row.split(" | ")[0] for row in table[2:]] == [
        "| Base",
        "| Base+LR",
        "| Base+LR+Oracle",
    ]
    rows = trainer.read_report_csv(str(out / "ablation.csv"))
    assert len(rows) == 3


def test_ablate_with_llm_mask(tmp_path):
    config = write_json(tmp_path / "exp.json", TINY_EXPERIMENT)
    mask = str(tmp_path / "oracle.mask.csv")
    cooccur.save_mask(cooccur.ValidityMask(np.eye(4, 5, dtype=bool)), mask)
    args = ["ablate", "--config", config, "--seeds", "1", "--llm-mask", mask]
    result = run(args + ["--out", tmp_path / "ablation"])
    assert result.exit is None
    assert result.out.splitlines()[-1].startswith("| Base+LR+LLM |")

    cooccur.save_mask(cooccur.ValidityMask([[True, False]]), mask)
    assert run(args + ["--out", tmp_path / "other"], exit=True) == 2


#
# Entry point
#


def test_main(tmp_path, monkeypatch):
    monkeypatch.setenv("COLOGIC_LOG_LEVEL", "debug")
    mask = str(tmp_path / "mask.csv")
    cooccur.save_mask(cooccur.ValidityMask([[True, False]]), mask)
    out = str(tmp_path / "rules.lgc")
    cli.main(["gen-constraints", "--mask", mask, "--mode", "invalid", "--out", out])
    assert dsl.render(dsl.load(out)).endswith("!(verb:0 & noun:1)\n")


def test_main_reports_failures(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["gen-constraints", "--mask", str(tmp_path / "missing.csv")])
    assert excinfo.value.code == 1


@pytest.mark.parametrize(
    "command, flags",
    [
        ("build-matrix", ["--annotations", "--vocab", "--min-count", "--mask-out"]),
        ("gen-constraints", ["--mask", "--mode", "--out"]),
        ("train", ["--config", "--constraints", "--out"]),
        ("llm-matrix", ["--mock", "--union", "--unknown-valid"]),
        ("ensemble", ["--inputs", "--weights", "--mask", "--mode", "--name"]),
        ("eval", ["--pred", "--labels", "--mask", "--out"]),
        ("heatmap", ["--matrix", "--verbs", "--nouns", "--block"]),
        ("ablate", ["--config", "--seeds", "--refine", "--llm-mask"]),
    ],
)
def test_help(command, flags, capsys):
    assert run([command, "--help"], exit=True) == 0
    usage = capsys.readouterr().out
    for flag in flags:
        assert flag in usage


#
# Edge cases
#


def test_min_count_leaving_no_valid_pair(matrix_files, tmp_path):
    vocab, _, _ = matrix_files
    args = ["build-matrix", "--vocab", vocab, "--out", tmp_path / "m.csv"]
    args += ["--annotations", tmp_path / "train.csv", "--min-count", "5"]
    result = run(args)
    assert result.exit == 2
    assert "5 times or more" in result.err


def test_all_valid_mask_has_no_negations(tmp_path):
    mask = str(tmp_path / "mask.csv")
    cooccur.save_mask(cooccur.ValidityMask([[True, True]]), mask)
    args = ["gen-constraints", "--mask", mask, "--mode", "invalid"]
    assert run(args + ["--out", tmp_path / "r.lgc"], exit=True) == 2


def test_train_is_deterministic(tmp_path):
    config = write_json(tmp_path / "exp.json", TINY_EXPERIMENT)
    for out in ("first", "second"):
        args = ["train", "--config", config, "--constraints", "source"]
        assert run(args + ["--out", tmp_path / out]).exit is None
    for name in ("metrics.csv", "history.csv", "predictions.jsonl"):
        first = (tmp_path / "first" / name).read_bytes()
        assert first == (tmp_path / "second" / name).read_bytes(), name
