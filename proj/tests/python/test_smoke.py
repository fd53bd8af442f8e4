"""Smoke tests for the python module: a quick pass over every exposed
operation, with a tiny end-to-end training run."""

import json
import math

import pytest

import tanda


def test_version():
    assert tanda.__version__


def test_metrics_hand_values():
    assert tanda.average_precision([1, 0, 1]) == pytest.approx(5 / 6, abs=1e-12)
    assert tanda.average_precision([1, 1, 0]) == 1.0
    assert tanda.reciprocal_rank([0, 0, 1, 0]) == pytest.approx(1 / 3)
    assert tanda.precision_at_1([0, 1]) == 0.0
    assert tanda.rank([0.2, 0.9, 0.9]) == [1, 2, 0]


def test_metric_errors():
    with pytest.raises(ArithmeticError):
        tanda.average_precision([0, 0])
    with pytest.raises(ArithmeticError):
        tanda.rank([float("nan")])


def test_sample_indices_pinned_stream():
    # frozen values of the documented splitmix64 -> xoshiro256** chain
    assert tanda.sample_indices(10, 3, 42) == [1, 2, 3]
    assert tanda.sample_indices(100, 5, 7) == [52, 60, 69, 85, 94]
    assert tanda.sample_indices(10, 0, 1) == []


def test_noise_counts(tmp_path):
    lines = []
    for i in range(8672):
        lines.append(f"q{i // 8}\tquestion\tsentence {i}\t{i % 2}")
    src = tmp_path / "train.tsv"
    src.write_text("\n".join(lines) + "\n")
    out = tmp_path / "noisy.tsv"
    result = tanda.inject_noise(str(src), str(out), 0.10, seed=3)
    assert result["n_flipped"] == 867  # floor(0.10 * 8672)
    rerun = tanda.inject_noise(str(src), str(tmp_path / "noisy2.tsv"), 0.10, seed=3)
    assert rerun["n_flipped"] == 867
    assert (tmp_path / "noisy2.tsv").read_text() == out.read_text()


def test_synth_stats_evaluate_roundtrip(tmp_path):
    out_dir = tmp_path / "synth"
    info = tanda.synth(str(out_dir), n_questions=60, candidates=4,
                       vocab_size=48, signal=6, seed=11)
    assert info["transfer_train"]["n_questions"] == 60

    stats = tanda.stats(str(out_dir / "target_test.tsv"), mode="clean")
    assert stats["n_questions"] == stats["n_pos"]  # one positive each

    # perfect scores from the generating rule file
    rules = json.loads((out_dir / "rules.json").read_text())["target"]
    data_lines = (out_dir / "target_test.tsv").read_text().splitlines()
    scores = []
    for line in data_lines:
        _, question, sentence, _ = line.split("\t")
        answer = next(a for k, a in rules.items() if k in question.split())
        scores.append("1.0" if answer in sentence.split() else "0.0")
    score_path = tmp_path / "oracle.scores"
    score_path.write_text("\n".join(scores) + "\n")
    report = tanda.evaluate_files(str(out_dir / "target_test.tsv"),
                                  str(score_path), mode="clean")
    assert report["map"] == pytest.approx(1.0)
    assert report["p_at_1"] == pytest.approx(1.0)


def test_asnq_build_and_binarize(tmp_path):
    record = {
        "example_id": 1,
        "question_text": "what is it",
        "document_tokens": (
            [{"token": "<p>", "html_token": True}]
            + [{"token": t, "html_token": False}
               for t in "the answer is gold .".split()]
            + [{"token": t, "html_token": False}
               for t in "other words here .".split()]
            + [{"token": "</p>", "html_token": True}]
        ),
        "annotations": [{
            "long_answer": {"start_token": 0, "end_token": 11},
            "short_answers": [{"start_token": 4, "end_token": 5}],
            "yes_no_answer": "NONE",
        }],
    }
    src = tmp_path / "nq.jsonl"
    src.write_text(json.dumps(record) + "\n")
    asnq = tmp_path / "asnq.tsv"
    stats = tanda.build_asnq(str(src), str(asnq))
    assert stats["label_counts"]["4"] == 1
    assert stats["label_counts"]["3"] == 1

    binary = tmp_path / "binary.tsv"
    out = tanda.binarize(str(asnq), str(binary), negatives=[1, 2, 3])
    assert out["n_pairs"] == 2
    assert out["n_pos"] == 1


def test_train_ft_and_score_smoke(tmp_path):
    out_dir = tmp_path / "synth"
    tanda.synth(str(out_dir), n_questions=80, candidates=4, vocab_size=48,
                signal=6, seed=2)
    run_dir = tmp_path / "run"
    result = tanda.train_ft(
        str(out_dir / "target_train.tsv"),
        str(out_dir / "target_dev.tsv"),
        str(run_dir),
        d_model=16, n_blocks=1, n_heads=2, max_len=12,
        lr=1e-3, max_epochs=1, seed=4,
    )
    assert result["result"]["best_epoch"] == 1
    ckpt = result["checkpoint"]

    scores = tanda.score_file(ckpt, str(out_dir / "target_dev.tsv"))
    n_pairs = tanda.stats(str(out_dir / "target_dev.tsv"))["n_pairs"]
    assert len(scores) == n_pairs
    assert all(0.0 <= s <= 1.0 for s in scores)

    report = tanda.evaluate_checkpoint(ckpt, str(out_dir / "target_dev.tsv"))
    assert 0.0 <= report["map"] <= 1.0
    assert report["mode"] == "clean"


def test_train_tanda_smoke(tmp_path):
    out_dir = tmp_path / "synth"
    tanda.synth(str(out_dir), n_questions=80, candidates=4, vocab_size=48,
                signal=6, seed=2)
    run_dir = tmp_path / "tanda_run"
    result = tanda.train_tanda(
        str(out_dir / "transfer_train.tsv"),
        str(out_dir / "target_train.tsv"),
        str(out_dir / "target_dev.tsv"),
        str(run_dir),
        test_tsv=str(out_dir / "target_test.tsv"),
        d_model=16, n_blocks=1, n_heads=2, max_len=12,
        transfer_lr=1e-3, transfer_epochs=1, adapt_lr=5e-5, adapt_epochs=1,
        seed=4,
    )
    assert "transfer" in result and "adapt" in result
    assert "test" in result
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["command"] == "train-tanda"
    assert manifest["config"]["adapt"]["learning_rate"] == pytest.approx(5e-5)


def test_grad_check_scaling():
    fine = tanda.grad_check(epsilon=1e-3, include_mlm=False)
    coarse = tanda.grad_check(epsilon=3e-3, include_mlm=False)
    # central-difference truncation scales as eps^2
    assert 4.0 < coarse["worst"] / fine["worst"] < 20.0
