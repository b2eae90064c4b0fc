"""End-to-end command-line behaviour: config plumbing, the full pipeline,
and error exits."""

import contextlib
import io
import json
import subprocess
import sys

import pytest

from streamkp.cli import RunConfig, load_run_config, main
from streamkp.corpus import load_transcripts
from streamkp.model import load_extractions

TINY = {
    "vocab_hash_buckets": 64,
    "hidden_dim": 8,
    "num_layers": 1,
    "num_heads": 2,
    "max_sequence_length": 64,
    "epochs": 1,
    "batch_size": 4,
    "disc_epochs": 1,
    "n_transcripts": 2,
    "paragraphs_per_transcript": 3,
    "n_general": 6,
    "seed": 0,
}


def run_cli(argv):
    """Run main() in-process, returning (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


# --- config plumbing ---------------------------------------------------------

def test_show_config_prints_full_default_config():
    code, out, _ = run_cli(["--show-config"])
    assert code == 0
    obj = json.loads(out)
    import dataclasses

    assert obj == dataclasses.asdict(RunConfig())


def test_show_config_output_round_trips_as_config_file(tmp_path):
    code, out, _ = run_cli(["--show-config"])
    path = tmp_path / "cfg.json"
    path.write_text(out)
    assert load_run_config(path) == RunConfig()
    code2, out2, _ = run_cli(["--config", str(path), "--show-config"])
    assert code2 == 0 and json.loads(out2) == json.loads(out)


def test_flags_override_file_which_overrides_defaults(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"hidden_dim": 16, "eta": 0.2}))
    # file beats defaults
    _, out, _ = run_cli(["--config", str(path), "--show-config"])
    obj = json.loads(out)
    assert obj["hidden_dim"] == 16 and obj["eta"] == 0.2
    # flag beats file
    _, out, _ = run_cli(
        ["--config", str(path), "--hidden-dim", "8", "--show-config"]
    )
    assert json.loads(out)["hidden_dim"] == 8


def test_seed_flag_overrides_config_seed(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 5}))
    _, out, _ = run_cli(["--config", str(path), "--seed", "9", "--show-config"])
    assert json.loads(out)["seed"] == 9


def test_unknown_config_key_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"hidden_dims": 16}))
    code, _, err = run_cli(["--config", str(path), "--show-config"])
    assert code == 2
    assert "hidden_dims" in err


def test_invalid_json_config_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    code, _, err = run_cli(["--config", str(path), "--show-config"])
    assert code == 2 and "error:" in err


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as exc_info:
        run_cli([])
    assert exc_info.value.code == 2


# --- full pipeline -----------------------------------------------------------

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run every subcommand once over a tiny synthetic corpus."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    paths = {
        "cfg": cfg,
        "transcripts": root / "transcripts.jsonl",
        "general": root / "general.jsonl",
        "disc": root / "disc.pt",
        "silver": root / "silver.jsonl",
        "model": root / "model.pt",
        "metrics": root / "metrics.jsonl",
        "extractions": root / "extractions.jsonl",
        "eval": root / "eval.json",
        "scans": root / "scans.jsonl",
    }
    summaries = {}
    steps = {
        "synth": [
            "synth",
            "--transcripts-out", str(paths["transcripts"]),
            "--general-out", str(paths["general"]),
        ],
        "train-discriminator": [
            "train-discriminator",
            "--transcripts", str(paths["transcripts"]),
            "--general", str(paths["general"]),
            "--model-out", str(paths["disc"]),
        ],
        "silver-annotate": [
            "silver-annotate",
            "--discriminator", str(paths["disc"]),
            "--transcripts", str(paths["transcripts"]),
            "--general", str(paths["general"]),
            "--out", str(paths["silver"]),
        ],
        "train": [
            "train",
            "--transcripts", str(paths["transcripts"]),
            "--general", str(paths["general"]),
            "--silver", str(paths["silver"]),
            "--model-out", str(paths["model"]),
            "--metrics-out", str(paths["metrics"]),
        ],
        "extract": [
            "extract",
            "--model", str(paths["model"]),
            "--transcripts", str(paths["transcripts"]),
            "--out", str(paths["extractions"]),
        ],
        "eval": [
            "eval",
            "--model", str(paths["model"]),
            "--transcripts", str(paths["transcripts"]),
            "--out", str(paths["eval"]),
            "--k", "1,2",
        ],
        "chitchat-scan": [
            "chitchat-scan",
            "--model", str(paths["model"]),
            "--transcripts", str(paths["transcripts"]),
            "--out", str(paths["scans"]),
        ],
    }
    for name, argv in steps.items():
        code, out, err = run_cli(["--config", str(cfg)] + argv)
        assert code == 0, f"{name} failed: {err}"
        summaries[name] = json.loads(out)
    return paths, summaries


def test_pipeline_synth_wrote_loadable_corpora(pipeline):
    paths, summaries = pipeline
    transcripts = load_transcripts(paths["transcripts"])
    assert len(transcripts) == TINY["n_transcripts"]
    assert summaries["synth"]["transcripts"] == str(paths["transcripts"])


def test_pipeline_discriminator_summary(pipeline):
    _, summaries = pipeline
    s = summaries["train-discriminator"]
    assert 0.0 <= s["accuracy"] <= 1.0
    assert s["n_train"] > 0 and s["n_eval"] > 0


def test_pipeline_silver_covers_every_paragraph(pipeline):
    paths, summaries = pipeline
    n_lines = len(paths["silver"].read_text().splitlines())
    expected = TINY["n_transcripts"] * TINY["paragraphs_per_transcript"] + TINY["n_general"]
    assert n_lines == expected == summaries["silver-annotate"]["paragraphs"]


def test_pipeline_train_metrics_schema(pipeline):
    paths, summaries = pipeline
    lines = paths["metrics"].read_text().splitlines()
    assert len(lines) == summaries["train"]["steps"] > 0
    for line in lines:
        obj = json.loads(line)
        assert set(obj) == {"step", "l_kp", "l_bridge", "l_rl", "r_rep", "r_chitchat", "b"}


def test_pipeline_extractions_cover_every_paragraph(pipeline):
    paths, _ = pipeline
    extractions = load_extractions(paths["extractions"])
    transcripts = load_transcripts(paths["transcripts"])
    assert set(extractions) == {p.id for t in transcripts for p in t.paragraphs}


def test_pipeline_eval_respects_k_flag(pipeline):
    paths, summaries = pipeline
    report = json.loads(paths["eval"].read_text())
    assert set(report["f1"]) == {"1", "2"}
    assert report == summaries["eval"]
    assert 0.0 <= report["repetition_rate"] <= 1.0
    assert 0.0 <= report["chitchat_violation_rate"] <= 1.0


def test_pipeline_chitchat_scan_lines(pipeline):
    paths, summaries = pipeline
    lines = paths["scans"].read_text().splitlines()
    assert len(lines) == summaries["chitchat-scan"]["paragraphs"]
    obj = json.loads(lines[0])
    assert set(obj) == {"paragraph_id", "alpha", "flags", "beta"}


def test_pipeline_is_seed_deterministic(pipeline, tmp_path):
    # rerun synth with the same config: identical bytes
    paths, _ = pipeline
    again = tmp_path / "again.jsonl"
    code, _, _ = run_cli(
        ["--config", str(paths["cfg"]), "synth", "--transcripts-out", str(again)]
    )
    assert code == 0
    assert again.read_text() == paths["transcripts"].read_text()


# --- error exits -------------------------------------------------------------

def test_missing_corpus_file_exits_two(tmp_path):
    model = tmp_path / "never-made.pt"
    code, _, err = run_cli(
        ["extract", "--model", str(model), "--transcripts", "also-missing.jsonl",
         "--out", str(tmp_path / "out.jsonl")]
    )
    assert code == 2 and err.startswith("error:")


def test_corrupt_checkpoint_exits_two(tmp_path):
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"garbage")
    transcripts = tmp_path / "t.jsonl"
    transcripts.write_text("")
    code, _, err = run_cli(
        ["extract", "--model", str(bad), "--transcripts", str(transcripts),
         "--out", str(tmp_path / "out.jsonl")]
    )
    assert code == 2 and "checkpoint" in err


def test_bad_k_flag_exits_two(pipeline, tmp_path):
    paths, _ = pipeline
    code, _, err = run_cli(
        ["eval", "--model", str(paths["model"]),
         "--transcripts", str(paths["transcripts"]), "--k", "1,two"]
    )
    assert code == 2 and "--k" in err


def test_empty_corpus_silver_annotate_exits_two(pipeline, tmp_path):
    paths, _ = pipeline
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, _, err = run_cli(
        ["silver-annotate", "--discriminator", str(paths["disc"]),
         "--transcripts", str(empty), "--out", str(tmp_path / "s.jsonl")]
    )
    assert code == 2 and "no paragraphs" in err


def test_negative_eta_exits_two(pipeline, tmp_path):
    paths, _ = pipeline
    code, _, err = run_cli(
        ["--eta", "-0.5",
         "silver-annotate", "--discriminator", str(paths["disc"]),
         "--transcripts", str(paths["transcripts"]),
         "--out", str(tmp_path / "s.jsonl")]
    )
    assert code == 2 and err.startswith("error:")


# --- module entry point --------------------------------------------------------

def test_module_invocation_works():
    proc = subprocess.run(
        [sys.executable, "-m", "streamkp.cli", "--show-config"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["hidden_dim"] == 32
