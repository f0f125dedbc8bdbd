import json

import numpy as np
import attackbench as ab
from attackbench.cli import cli

BLOBS = "2,100,2,0.05"


def run_train(tmp_path, **extra):
    ckpt = tmp_path / "victim.takm"
    argv = ["train", "--blobs", BLOBS, "--epochs", "20", "--lr", "0.5",
            "--batch-size", "32", "--seed", "0", "--out", str(ckpt)]
    for k, v in extra.items():
        argv += [k, v]
    assert cli(argv) == 0
    return ckpt


def test_train_writes_checkpoint_and_report(tmp_path, capsys):
    report = tmp_path / "train.json"
    ckpt = run_train(tmp_path, **{"--report": str(report)})
    assert ckpt.exists()
    payload = json.loads(report.read_text())
    assert payload["training_accuracy"] >= 0.95
    out = capsys.readouterr().out
    assert "training_accuracy" in out


def test_attack_eps_zero_keeps_clean_accuracy(tmp_path):
    ckpt = run_train(tmp_path)
    archive = tmp_path / "adv.taks"
    report = tmp_path / "attack.json"
    code = cli(["attack", "--model", str(ckpt), "--blobs", BLOBS,
                "--attack", "fgsm", "--eps", "0", "--seed", "0",
                "--out", str(archive), "--report", str(report)])
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload["robust_accuracy"] == payload["clean_accuracy"]
    assert payload["attack_success_rate"] == 0.0

    eval_report = tmp_path / "eval.json"
    code = cli(["eval", "--model", str(ckpt), "--archive", str(archive),
                "--blobs", BLOBS, "--report", str(eval_report)])
    assert code == 0
    evaluated = json.loads(eval_report.read_text())
    assert evaluated["robust_accuracy"] == evaluated["clean_accuracy"]


def test_unknown_attack_exits_1_with_usage(tmp_path, capsys):
    ckpt = run_train(tmp_path)
    code = cli(["attack", "--model", str(ckpt), "--blobs", BLOBS,
                "--attack", "ghost"])
    assert code == 1
    err = capsys.readouterr().err
    assert "usage:" in err


def test_archives_byte_identical_across_runs(tmp_path):
    ckpt = run_train(tmp_path)
    blobs = []
    for name in ("a", "b"):
        archive = tmp_path / f"{name}.taks"
        code = cli(["attack", "--model", str(ckpt), "--blobs", BLOBS,
                    "--attack", "pgd", "--eps", "0.3", "--alpha", "0.075",
                    "--steps", "20", "--seed", "7", "--out", str(archive)])
        assert code == 0
        blobs.append(archive.read_bytes())
    assert blobs[0] == blobs[1]


def test_attack_chunking_does_not_change_archive(tmp_path):
    ckpt = run_train(tmp_path)
    whole = tmp_path / "whole.taks"
    chunked = tmp_path / "chunked.taks"
    base = ["attack", "--model", str(ckpt), "--blobs", BLOBS, "--attack", "pgd",
            "--eps", "0.2", "--alpha", "0.05", "--steps", "5", "--seed", "3"]
    assert cli(base + ["--out", str(whole)]) == 0
    assert cli(base + ["--out", str(chunked), "--batch-size", "17"]) == 0
    assert whole.read_bytes() == chunked.read_bytes()


def test_multi_attack_via_cli(tmp_path):
    ckpt = run_train(tmp_path)
    report = tmp_path / "multi.json"
    code = cli(["attack", "--model", str(ckpt), "--blobs", BLOBS,
                "--attack", "multi", "--plan", "fgsm,pgd", "--eps", "0.3",
                "--alpha", "0.075", "--steps", "20", "--seed", "0",
                "--report", str(report)])
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload["attack_success_rate"] >= 0.95
    assert payload["config"]["attack"] == "multi[fgsm,pgd]"


def test_int_return_type_round_trip(tmp_path):
    ckpt = run_train(tmp_path)
    archive = tmp_path / "int.taks"
    code = cli(["attack", "--model", str(ckpt), "--blobs", BLOBS,
                "--attack", "fgsm", "--eps", "0.1", "--return-type", "int",
                "--seed", "0", "--out", str(archive)])
    assert code == 0
    arc = ab.load_archive(str(archive))
    assert arc.examples.dtype == np.uint8
    assert cli(["eval", "--model", str(ckpt), "--archive", str(archive),
                "--blobs", BLOBS]) == 0


def test_eval_data_only_clean_report(tmp_path, capsys):
    ckpt = run_train(tmp_path)
    capsys.readouterr()  # drain training output
    assert cli(["eval", "--model", str(ckpt), "--blobs", BLOBS]) == 0
    payload = json.loads(capsys.readouterr().out.splitlines()[0])
    assert payload["robust_accuracy"] == payload["clean_accuracy"]
    assert payload["mean_linf"] == 0.0


def test_missing_model_file_exits_2(tmp_path):
    assert cli(["eval", "--model", str(tmp_path / "absent.takm"),
                "--blobs", BLOBS]) == 2


def test_corrupt_archive_exits_2(tmp_path):
    ckpt = run_train(tmp_path)
    bad = tmp_path / "bad.taks"
    bad.write_bytes(b"TAKS" + b"\x00")
    assert cli(["eval", "--model", str(ckpt), "--archive", str(bad)]) == 2


def test_missing_dataset_flags_exit_1(tmp_path):
    ckpt = run_train(tmp_path)
    assert cli(["attack", "--model", str(ckpt), "--attack", "fgsm"]) == 1


def test_gradcheck_passes_on_trained_model(tmp_path, capsys):
    ckpt = run_train(tmp_path, **{"--hidden": "6"})
    capsys.readouterr()  # drain training output
    assert cli(["gradcheck", "--model", str(ckpt), "--tol", "1e-4"]) == 0
    payload = json.loads(capsys.readouterr().out.splitlines()[0])
    assert payload["passed"] is True
    assert payload["max_relative_error"] < 1e-4


def test_thread_hint_is_validated_and_inert(tmp_path, monkeypatch):
    ckpt = run_train(tmp_path)
    a1 = tmp_path / "hint1.taks"
    a2 = tmp_path / "hint2.taks"
    base = ["attack", "--model", str(ckpt), "--blobs", BLOBS, "--attack", "fgsm",
            "--eps", "0.1", "--seed", "0"]
    monkeypatch.setenv("ATTACKBENCH_THREADS", "4")
    assert cli(base + ["--out", str(a1)]) == 0
    monkeypatch.delenv("ATTACKBENCH_THREADS")
    assert cli(base + ["--out", str(a2)]) == 0
    assert a1.read_bytes() == a2.read_bytes()
    monkeypatch.setenv("ATTACKBENCH_THREADS", "zero")
    assert cli(base) == 1


def test_train_and_attack_from_idx_files(tmp_path):
    from attackbench.data import write_idx
    g = np.random.default_rng(0)
    ds = ab.generate_blobs(2, 50, 4, 0.05, 0)
    pixels = ab.finalize_return(ds.examples, "int")
    write_idx(tmp_path / "img.idx", tmp_path / "lab.idx", pixels,
              ds.labels.labels.astype(np.uint8), rows=2, cols=2)
    ckpt = tmp_path / "m.takm"
    assert cli(["train", "--data", str(tmp_path / "img.idx"),
                "--labels", str(tmp_path / "lab.idx"), "--epochs", "20",
                "--lr", "0.5", "--batch-size", "16", "--seed", "0",
                "--out", str(ckpt)]) == 0
    report = tmp_path / "fgsm.json"
    assert cli(["attack", "--model", str(ckpt), "--data", str(tmp_path / "img.idx"),
                "--labels", str(tmp_path / "lab.idx"), "--attack", "fgsm",
                "--eps", "0.2", "--seed", "0", "--report", str(report)]) == 0
    assert json.loads(report.read_text())["clean_accuracy"] >= 0.9


def test_eval_archive_originals_count_mismatch_exits_1(tmp_path):
    ckpt = run_train(tmp_path)
    archive = tmp_path / "adv.taks"
    assert cli(["attack", "--model", str(ckpt), "--blobs", BLOBS,
                "--attack", "fgsm", "--eps", "0.1", "--seed", "0",
                "--out", str(archive)]) == 0
    assert cli(["eval", "--model", str(ckpt), "--archive", str(archive),
                "--blobs", "2,10,2,0.05"]) == 1


def test_tpgd_via_cli(tmp_path):
    ckpt = run_train(tmp_path)
    report = tmp_path / "tpgd.json"
    assert cli(["attack", "--model", str(ckpt), "--blobs", BLOBS,
                "--attack", "tpgd", "--seed", "0", "--report", str(report)]) == 0


def test_eotpgd_with_noise_sigma(tmp_path):
    ckpt = run_train(tmp_path, **{"--hidden": "6"})
    report = tmp_path / "eot.json"
    assert cli(["attack", "--model", str(ckpt), "--blobs", BLOBS,
                "--attack", "eotpgd", "--eps", "0.2", "--alpha", "0.05",
                "--steps", "4", "--sampling", "5", "--noise-sigma", "0.5",
                "--seed", "0", "--report", str(report)]) == 0
    payload = json.loads(report.read_text())
    assert payload["total_queries"] > 0
