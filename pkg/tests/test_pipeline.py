import json
from pathlib import Path

import pytest

from maqa import demo
from maqa.config import LLM_ROLES, dump_config, from_dict, load_config
from maqa.errors import ConfigurationError, ContractError, StageError
from maqa.llm import BackendSpec, StubClient
from maqa.pipeline import (
    Pipeline,
    arecall_curve,
    metrics_digest,
    report_latency,
    sweep,
    write_sweep_table,
)

QID = demo.QUESTION_ID


def macro(out, name="metrics.json"):
    return json.loads((Path(out) / name).read_text())["macro"]


def test_fixture_inputs_are_reproducible(tmp_path):
    """The frozen fixture under tests/fixtures/demo is exactly what the demo builder writes."""
    demo.build_fixture(tmp_path)
    frozen = Path(__file__).parent / "fixtures" / "demo"
    for name in ("docs.jsonl", "gold.jsonl", "config.yaml", "stub_script.json"):
        assert (tmp_path / name).read_bytes() == (frozen / name).read_bytes(), name


def test_reading_and_verified_metrics(demo_config):
    p = Pipeline(demo_config)
    manifest = p.run()
    cands = p.candidates()[QID]
    assert set(cands.surfaces) == demo.EXPECTED_READING and len(cands.candidates) == 6
    assert all(c.source_passage_id.split(":")[0] == c.normalized.replace(" ", "-") for c in cands.candidates)
    assert manifest["counters"]["llm"]["reader"] == {"generate": 12}
    m = macro(demo_config.run.output_dir, "metrics_reading.json")
    assert (m["precision"], m["recall"], m["f1"]) == (0.5, 1.0, pytest.approx(2 / 3))
    assert macro(demo_config.run.output_dir) == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    assert set(p.final_predictions()[QID]) == demo.EXPECTED_RETAINED["full"]
    assert len(p.final_predictions()[QID]) <= len(cands.candidates)


def test_ipv_disabled_reproduces_reading_metrics(demo_config):
    cfg = demo_config.with_overrides(**{"ipv.enabled": False})
    manifest = Pipeline(cfg).run()
    assert "verify" not in manifest["completed"]
    m = macro(cfg.run.output_dir)
    assert (m["precision"], m["recall"]) == (0.5, 1.0)
    assert set(report_latency(manifest)) == {"pool", "read"}


def test_rerun_is_cached_and_identical(demo_config):
    Pipeline(demo_config).run()
    digest = metrics_digest(Path(demo_config.run.output_dir) / "metrics.json")
    again = Pipeline(demo_config)
    manifest = again.run()
    assert manifest["counters"]["llm_total"] == 0
    assert all(s["cached"] for s in manifest["stages"].values())
    assert metrics_digest(Path(demo_config.run.output_dir) / "metrics.json") == digest


def test_cache_soundness_forced_recompute(demo_config):
    first = Pipeline(demo_config).run()
    forced = Pipeline(demo_config, resume=False).run()
    assert forced["counters"]["llm_total"] > 0
    for stage, rec in first["stages"].items():
        assert forced["stages"][stage]["output_hash"] == rec["output_hash"], stage


def test_reports_byte_identical_across_output_dirs(demo_config, tmp_path):
    Pipeline(demo_config).run()
    other = demo_config.with_overrides(**{"run.output_dir": str(tmp_path / "elsewhere")})
    Pipeline(other).run()
    for name in ("metrics.json", "metrics_reading.json"):
        assert (Path(demo_config.run.output_dir) / name).read_bytes() == (tmp_path / "elsewhere" / name).read_bytes()


def test_ablation_answer_sets(demo_config):
    for name, overrides in demo.ABLATIONS.items():
        p = Pipeline(demo_config.with_overrides(**overrides))
        p.run()
        assert set(p.final_predictions()[QID]) == demo.EXPECTED_RETAINED[name], name


def test_other_reading_modes_and_judge(demo_config):
    p = Pipeline(demo_config.with_overrides(**{"reader.mode": "concatenated", "ipv.enabled": False}))
    p.run()
    assert set(p.candidates()[QID].surfaces) == demo.EXPECTED_READING
    assert all(not c.has_source for c in p.candidates()[QID].candidates)
    p = Pipeline(demo_config.with_overrides(**{"reader.mode": "closed_book"}))
    manifest = p.run()
    assert manifest["counters"]["llm"]["reader"] == {"generate": 1}
    p = Pipeline(demo_config.with_overrides(**{"eval.judge": True}))
    p.run()
    assert macro(demo_config.run.output_dir)["f1"] == 1.0


class FailingReader(StubClient):
    def _complete(self, request, want_distribution):
        from maqa.errors import BackendError

        raise BackendError("reader offline", status=503)


def test_stage_failure_records_partial_run_and_resumes(demo_config):
    broken = FailingReader(BackendSpec(kind="stub", model_id="scripted"))
    with pytest.raises(StageError) as info:
        Pipeline(demo_config, clients={"reader": broken}).run()
    assert info.value.stage == "read"
    manifest = json.loads((Path(demo_config.run.output_dir) / "manifest.json").read_text())
    assert manifest["failed"] == "read"
    assert manifest["completed"] == ["ingest", "index", "embed", "pool"]
    resumed = Pipeline(demo_config).run()
    assert [s for s, r in resumed["stages"].items() if r["cached"]] == ["ingest", "index", "embed", "pool"]
    assert resumed["failed"] is None


def test_until_stops_early_and_rejects_unplanned(demo_config):
    manifest = Pipeline(demo_config).run("pool")
    assert manifest["completed"] == ["ingest", "index", "embed", "pool"]
    with pytest.raises(ConfigurationError):
        Pipeline(demo_config.with_overrides(**{"ipv.enabled": False})).planned_stages("verify")
    with pytest.raises(ConfigurationError):
        Pipeline(demo_config).planned_stages("bogus")


def test_sweeps(demo_config, tmp_path):
    rows = sweep(demo_config, "k", [1, 2, 3])
    assert len(rows) == 3 and [r.recall for r in rows] == sorted(r.recall for r in rows)
    extra = sweep(demo_config, "k_extra", [0, 1])
    assert extra[0].recall < extra[1].recall and extra[0].precision == extra[1].precision == 1.0
    bad = sweep(demo_config, "k_extra", [1, -1])
    assert [r.status for r in bad] == ["ok", "failed"] and bad[1].f1 is None
    write_sweep_table(bad, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[2] == "k_extra,-1,,,,failed"
    with pytest.raises(ContractError):
        sweep(demo_config, "k", [])
    with pytest.raises(ConfigurationError):
        sweep(demo_config, "pool_size", [1])


def test_arecall_curve_monotone(demo_config):
    p = Pipeline(demo_config)
    p.run()
    curve = arecall_curve(p, [1, 2, 4, 8, 12])
    assert [v for _, v in curve] == sorted(v for _, v in curve) and curve[-1][1] == 1.0


def test_report_latency_means():
    manifest = {"per_question_seconds": {"read": {"a": 1.0, "b": 3.0}, "pool": {"a": 0.5, "b": 0.5}}}
    assert report_latency(manifest) == {"pool": 0.5, "read": 2.0}
    with pytest.raises(ContractError):
        report_latency({"per_question_seconds": {}})


def test_manifest_contents(demo_config):
    manifest = Pipeline(demo_config).run()
    run_dir = Path(demo_config.run.output_dir) / "runs" / manifest["run_id"]
    assert json.loads((run_dir / "manifest.json").read_text()) == manifest
    assert (run_dir / "metrics.json").exists()
    assert set(manifest["stage_timings"]) == set(manifest["completed"])
    assert manifest["config"] == demo_config.to_dict()
    assert manifest["corpus_hash"] == manifest["stages"]["ingest"]["info"]["content_hash"]
    assert manifest["counters"]["retrieval"]["sparse"] > 0


# -- config ------------------------------------------------------------------

def test_config_loading_and_validation(tmp_path, demo_config):
    assert Path(demo_config.corpus.source).is_absolute()
    assert demo_config.llm.spec("verifier") is demo_config.llm.reader
    with pytest.raises(ConfigurationError, match="unknown keys"):
        from_dict({"retrieval": {"kind": "fused", "topk": 3}})
    with pytest.raises(ConfigurationError):
        from_dict({"retrieval": {"kind": "bm42"}})
    with pytest.raises(ConfigurationError):
        from_dict({"llm": {"reader": {"kind": "http"}}})
    with pytest.raises(ConfigurationError):
        demo_config.with_overrides(**{"ipv.nope": 1})
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("corpus: [unclosed")
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "bad.yaml")
    broken = demo_config.with_overrides(**{"corpus.source": str(tmp_path / "nope.jsonl")})
    with pytest.raises(ConfigurationError):
        Pipeline(broken).run()
    dump_config(demo_config, tmp_path / "round.yaml")
    assert load_config(tmp_path / "round.yaml").to_dict() == demo_config.to_dict()
    assert set(LLM_ROLES) == {"reader", "vqg", "verifier", "judge", "embedder"}
