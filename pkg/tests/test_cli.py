"""Command-line surface, exercised through click's test runner."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from evojudge.cli import main

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "evojudge" / "fixtures"
VAL_DIR = FIXTURES / "synthetic_val"
STORE_DIR = FIXTURES / "library_store"
META = json.loads((VAL_DIR / "meta.json").read_text(encoding="utf-8"))


@pytest.fixture()
def runner():
    return CliRunner()


def _invoke(runner, *args):
    return runner.invoke(main, list(args), catch_exceptions=False)


# ---------------------------------------------------------------------------
# eval


def test_eval_with_final_fixture_library_prints_expected_accuracy(runner):
    result = _invoke(
        runner, "eval",
        "--demos", str(VAL_DIR / "demos.jsonl"),
        "--image-root", str(VAL_DIR),
        "--library", str(STORE_DIR),
        "--library-version", META["final_version"][:12],
    )
    assert result.exit_code == 0, result.output
    assert "ranking_accuracy 0.625" in result.output
    assert "pairwise_accuracy" in result.output
    assert "ranking_accuracy_k2" in result.output


def test_eval_with_empty_library_prints_baseline(runner):
    result = _invoke(
        runner, "eval",
        "--demos", str(VAL_DIR / "demos.jsonl"),
        "--image-root", str(VAL_DIR),
    )
    assert result.exit_code == 0, result.output
    assert "ranking_accuracy 0.425" in result.output


def test_eval_unknown_version_fails_cleanly(runner):
    result = runner.invoke(main, [
        "eval",
        "--demos", str(VAL_DIR / "demos.jsonl"),
        "--image-root", str(VAL_DIR),
        "--library", str(STORE_DIR),
        "--library-version", "zzzz",
    ])
    assert result.exit_code != 0
    assert result.stderr.startswith("error: ")


# ---------------------------------------------------------------------------
# lib


def test_lib_list_marks_head_and_shows_counts(runner):
    result = _invoke(runner, "lib", "list", "--library", str(STORE_DIR))
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert any(line.startswith("*") for line in lines)
    assert any(META["final_version"] in line for line in lines)
    assert any("skills=3 tools=4" in line for line in lines)


def test_lib_show_lists_entries_and_renders_one(runner):
    result = _invoke(runner, "lib", "show", "--library", str(STORE_DIR),
                     META["final_version"][:12])
    assert result.exit_code == 0, result.output
    assert "visual-qa-tool" in result.output

    doc = _invoke(runner, "lib", "show", "--library", str(STORE_DIR),
                  META["final_version"][:12], "visual-qa-tool")
    assert doc.exit_code == 0, doc.output
    assert doc.output.startswith("---\nkind: tool")


def test_lib_diff_between_consecutive_versions(runner):
    lineage = json.loads((FIXTURES / "lineage.json").read_text(encoding="utf-8"))
    old, new = lineage[0]["version"], lineage[1]["version"]
    result = _invoke(runner, "lib", "diff", "--library", str(STORE_DIR), old, new)
    assert result.exit_code == 0, result.output
    assert result.output.count("added:") == 1


def test_lib_checkout_moves_head(runner, tmp_path):
    import shutil

    work = tmp_path / "store"
    shutil.copytree(STORE_DIR, work)
    lineage = json.loads((FIXTURES / "lineage.json").read_text(encoding="utf-8"))
    target = lineage[0]["version"]
    result = _invoke(runner, "lib", "checkout", "--library", str(work), target[:12])
    assert result.exit_code == 0, result.output
    assert f"head {target}" in result.output
    listed = _invoke(runner, "lib", "list", "--library", str(work))
    assert any(line.startswith("*") and target in line
               for line in listed.output.splitlines())


# ---------------------------------------------------------------------------
# synth + ingest


def test_synth_then_ingest_round_trip(runner, tmp_path):
    out = tmp_path / "demos"
    result = _invoke(runner, "synth", "--n", "8", "--seed", "4", "--out", str(out))
    assert result.exit_code == 0, result.output
    assert "wrote 8 demonstrations" in result.output

    manifest_path = tmp_path / "manifest.json"
    result = _invoke(runner, "ingest", "--demos", str(out / "demos.jsonl"),
                     "--image-root", str(out), "--out", str(manifest_path))
    assert result.exit_code == 0, result.output
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    assert manifest["count"] == 8
    assert sum(manifest["k_histogram"].values()) == 8
    assert len(manifest["ids"]) == 8


def test_ingest_missing_image_fails_naming_the_path(runner, tmp_path):
    out = tmp_path / "demos"
    _invoke(runner, "synth", "--n", "6", "--seed", "4", "--out", str(out))
    victim = next((out / "images").glob("demo-000-c1.json"))
    victim.unlink()
    result = runner.invoke(main, [
        "ingest", "--demos", str(out / "demos.jsonl"),
        "--image-root", str(out), "--out", str(tmp_path / "m.json"),
    ])
    assert result.exit_code != 0
    assert "demo-000-c1.json" in result.stderr
    assert result.stderr.startswith("error: ")


# ---------------------------------------------------------------------------
# evolve


def test_evolve_smoke_run(runner, tmp_path):
    demos_dir = tmp_path / "demos"
    _invoke(runner, "synth", "--n", "20", "--seed", "4", "--out", str(demos_dir))
    config = {
        "demos": str(demos_dir / "demos.jsonl"),
        "image_root": str(demos_dir),
        "seed": 4,
        "backend": {"kind": "synthetic_oracle", "oracle_seed": 0},
        "run_dir": str(tmp_path / "run"),
        "library_root": str(tmp_path / "lib"),
        "budget": 4,
    }
    config_path = tmp_path / "run.yaml"
    config_path.write_text(yaml.safe_dump(config), encoding="utf-8")
    result = _invoke(runner, "evolve", "--config", str(config_path))
    assert result.exit_code == 0, result.output
    assert "baseline_accuracy" in result.output
    assert result.output.count("iter ") == 4
    assert "final_version" in result.output
    assert "final_val_accuracy" in result.output
    assert (tmp_path / "run" / "trajectory.json").exists()
