import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from maqa.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, EXIT_STAGE, main

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "demo"


@pytest.fixture
def work(tmp_path):
    shutil.copytree(FIXTURE_DIR, tmp_path / "demo")
    return tmp_path / "demo"


def run(work, *args):
    return main(["--config", str(work / "config.yaml"), *args])


def test_run_then_cached_rerun(work, capsys):
    assert run(work, "run") == EXIT_OK
    out = capsys.readouterr().out
    assert "precision\trecall\tf1\n1.0000\t1.0000\t1.0000" in out
    assert run(work, "run") == EXIT_OK
    out = capsys.readouterr().out
    assert "llm_calls\t0" in out and "\tran" not in out
    metrics = json.loads((work / "out" / "metrics.json").read_text())
    assert set(metrics) == {"per_question", "macro", "config_echo"}


def test_individual_stage_commands_and_flags_after_subcommand(work, tmp_path, capsys):
    out_dir = tmp_path / "elsewhere"
    assert main(["ingest", "--config", str(work / "config.yaml"), "--output-dir", str(out_dir)]) == EXIT_OK
    assert main(["read", "--config", str(work / "config.yaml"), "--output-dir", str(out_dir)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "read\t" in out and "verify" not in out
    assert (out_dir / "manifest.json").exists()
    assert main(["evaluate", "--judge", "--no-resume", "--config", str(work / "config.yaml"),
                 "--output-dir", str(out_dir)]) == EXIT_OK
    assert json.loads((out_dir / "metrics.json").read_text())["config_echo"]["eval"]["judge"] is True


def test_sweep_writes_table_and_figure(work, capsys):
    assert run(work, "sweep", "--axis", "k", "--values", "1,4,12") == EXIT_OK
    with open(work / "out" / "sweep_k.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["value"] for r in rows] == ["1", "4", "12"]
    recalls = [float(r["recall"]) for r in rows]
    assert recalls == sorted(recalls)
    assert (work / "out" / "sweep_k.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_partial_sweep_exit_code(work):
    assert run(work, "sweep", "--axis", "k_extra", "--values", "0,-1") == EXIT_PARTIAL
    assert run(work, "sweep", "--axis", "k_extra", "--values", "-1") == EXIT_STAGE


def test_report_writes_delimited_tables_and_pngs(work, capsys):
    assert run(work, "report") == EXIT_CONFIG
    assert run(work, "run") == EXIT_OK
    capsys.readouterr()
    assert run(work, "report", "--ks", "1,2,12") == EXIT_OK
    out = capsys.readouterr().out
    assert "stage\tmean_seconds_per_question" in out and "k\tarecall" in out
    out_dir = work / "out"
    with open(out_dir / "arecall.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["k"] for r in rows] == ["1", "2", "12"] and float(rows[-1]["arecall"]) == 1.0
    assert [r[0] for r in csv.reader(open(out_dir / "latency.csv"))][1:] == ["pool", "read", "verify"]
    for name in ("latency.png", "arecall.png"):
        assert (out_dir / name).stat().st_size > 1000


def test_config_errors_exit_1(work, tmp_path, capsys):
    assert main(["run"]) == EXIT_CONFIG
    assert main(["--config", str(tmp_path / "missing.yaml"), "run"]) == EXIT_CONFIG
    (tmp_path / "bad.yaml").write_text("retrieval: {kind: nope}\n")
    assert main(["--config", str(tmp_path / "bad.yaml"), "run"]) == EXIT_CONFIG
    assert run(work, "sweep", "--axis", "k", "--values", "a,b") == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_stage_failure_exit_2(work, capsys):
    (work / "stub_script.json").write_text("{}\n")
    assert run(work, "run") == EXIT_STAGE
    assert "failed" in capsys.readouterr().err
    manifest = json.loads((work / "out" / "manifest.json").read_text())
    assert manifest["failed"] == "embed"


def test_demo_command_and_module_entry_point(tmp_path):
    assert main(["demo", str(tmp_path / "d")]) == EXIT_OK
    proc = subprocess.run([sys.executable, "-m", "maqa.cli", "--config", str(tmp_path / "d" / "config.yaml"), "run"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "1.0000\t1.0000\t1.0000" in proc.stdout
