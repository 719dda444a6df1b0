"""End-to-end pipeline with content-addressed stage caching.

Every stage writes into ``<output_dir>/stages/<stage>-<key>/`` where ``key``
hashes the stage's configuration together with the output hashes of the
stages it reads.  A stage whose directory holds a matching ``done.json`` (and
whose files still hash to the recorded value) is skipped, so an unchanged
rerun issues no model calls and a failed run resumes at the first incomplete
stage.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import logging
import shutil
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .config import LLM_ROLES, RunConfig
from .corpus import PassageStore, ingest
from .dataset import LOADERS, GoldRecord
from .errors import ConfigurationError, ContractError, MaqaError, StageError
from .evaluation import (
    llm_judge_match,
    macro_average,
    macro_arecall,
    score_question,
    score_question_with_judge,
)
from .ipv import PlanGenerator, Verifier, plan_for, save_jsonl
from .llm import LLMClient, make_client
from .reader import CandidateSet, Reader, load_candidates, save_candidates
from .retrieval.bm25 import BM25Index
from .retrieval.dense import DenseIndex, build_embedding_cache
from .retrieval.pool import Retriever, load_pool, save_pool
from .retrieval.types import RetrievalPool

log = logging.getLogger(__name__)

STAGES = ("ingest", "index", "embed", "pool", "read", "verify", "evaluate")
DONE_FILE = "done.json"
METRICS_FILE = "metrics.json"
READING_METRICS_FILE = "metrics_reading.json"


def sha256_json(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_files(root: Path, names: Sequence[str] | None = None) -> str:
    """Hash of the named files (or every file but done.json) under ``root``, by relative path."""
    if names is None:
        paths = sorted(p for p in root.rglob("*") if p.is_file() and p.name != DONE_FILE)
    else:
        paths = [root / n for n in sorted(names)]
    h = hashlib.sha256()
    for p in paths:
        h.update(p.relative_to(root).as_posix().encode("utf-8") + b"\x00")
        h.update(sha256_file(p).encode("ascii"))
    return h.hexdigest()


@dataclass
class StageRecord:
    stage: str
    key: str
    dir: str
    output_hash: str
    seconds: float
    cached: bool = False
    per_question_seconds: dict[str, float] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "key": self.key,
            "dir": self.dir,
            "output_hash": self.output_hash,
            "seconds": self.seconds,
            "cached": self.cached,
            "per_question_seconds": self.per_question_seconds,
            "info": self.info,
        }


class StageCache:
    def __init__(self, root: str | Path):
        self.root = Path(root) / "stages"

    def dir_for(self, stage: str, key: str) -> Path:
        return self.root / f"{stage}-{key[:20]}"

    def lookup(self, stage: str, key: str) -> StageRecord | None:
        d = self.dir_for(stage, key)
        done = d / DONE_FILE
        if not done.exists():
            return None
        with open(done, encoding="utf-8") as fh:
            rec = json.load(fh)
        if rec.get("key") != key or hash_files(d, rec.get("hashed")) != rec.get("output_hash"):
            log.warning("stage %s cache at %s is stale; recomputing", stage, d)
            return None
        return StageRecord(stage, key, str(d), rec["output_hash"], 0.0, True,
                           rec.get("per_question_seconds", {}), rec.get("info", {}))

    def begin(self, stage: str, key: str) -> Path:
        d = self.dir_for(stage, key)
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)
        return d

    def commit(self, stage: str, key: str, seconds: float, hashed: Sequence[str] | None = None,
               per_question_seconds: dict | None = None, info: dict | None = None) -> StageRecord:
        d = self.dir_for(stage, key)
        out_hash = hash_files(d, hashed)
        rec = {
            "key": key,
            "output_hash": out_hash,
            "hashed": list(hashed) if hashed is not None else None,
            "seconds": seconds,
            "per_question_seconds": per_question_seconds or {},
            "info": info or {},
        }
        with open(d / DONE_FILE, "w", encoding="utf-8") as fh:
            json.dump(rec, fh, indent=1, sort_keys=True)
        return StageRecord(stage, key, str(d), out_hash, seconds, False, per_question_seconds or {}, info or {})


def load_questions(cfg: RunConfig) -> list[GoldRecord]:
    loader = LOADERS.get(cfg.dataset.format)
    if loader is None:
        raise ConfigurationError(f"unknown dataset.format {cfg.dataset.format!r}")
    if cfg.dataset.format == "native":
        return loader(cfg.dataset.path, cfg.dataset.tag)
    return loader(cfg.dataset.path)


def config_hash(cfg: RunConfig) -> str:
    data = cfg.to_dict()
    data.pop("run", None)
    return sha256_json(data)


class Pipeline:
    """One configured run.  ``clients`` overrides the per-role model clients (tests, demos)."""

    def __init__(self, cfg: RunConfig, resume: bool = True, clients: dict[str, LLMClient] | None = None):
        self.cfg = cfg
        self.resume = resume
        self.out = Path(cfg.run.output_dir)
        self.cache = StageCache(self.out)
        self.semaphore = threading.BoundedSemaphore(max(1, cfg.llm.max_concurrency))
        self.clients: dict[str, LLMClient] = dict(clients or {})
        for role in LLM_ROLES:
            if role not in self.clients:
                self.clients[role] = make_client(cfg.llm.spec(role), self.semaphore, seed=cfg.run.seed)
        self._baseline = {role: c.calls.snapshot() for role, c in self.clients.items()}
        self.records: dict[str, StageRecord] = {}
        self._golds: list[GoldRecord] | None = None
        self._store: PassageStore | None = None
        self._retriever: Retriever | None = None
        self._retrieval_calls: dict[str, int] = {}

    # -- shared inputs -----------------------------------------------------

    @property
    def golds(self) -> list[GoldRecord]:
        if self._golds is None:
            self._golds = sorted(load_questions(self.cfg), key=lambda g: g.question.id)
        return self._golds

    @property
    def questions_hash(self) -> str:
        return sha256_json([g.to_json() for g in self.golds])

    @property
    def store(self) -> PassageStore:
        if self._store is None:
            self._store = PassageStore.load(self.records["ingest"].dir)
        return self._store

    def retriever(self) -> Retriever:
        if self._retriever is None:
            r = self.cfg.retrieval
            sparse = dense = None
            if "index" in self.records:
                sparse = BM25Index.load(self.records["index"].dir, r.bm25.k1, r.bm25.b)
            if "embed" in self.records:
                dense = DenseIndex.load(self.records["embed"].dir, expected_hash=self.store.manifest.content_hash)
            self._retriever = Retriever(r.kind, sparse, dense, self.clients["embedder"], r.k_rrf)
        return self._retriever

    def _parallel(self, fn: Callable[[GoldRecord], Any]) -> list[tuple[str, Any, float]]:
        """Run ``fn`` per question; results sorted by question id with wall-clock seconds."""
        def timed(g: GoldRecord):
            start = time.perf_counter()
            out = fn(g)
            return g.question.id, out, time.perf_counter() - start

        workers = max(1, self.cfg.run.max_parallel_questions)
        if workers > 1 and len(self.golds) > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(timed, self.golds))
        else:
            results = [timed(g) for g in self.golds]
        return sorted(results, key=lambda r: r[0])

    def _stage(self, stage: str, key_parts: dict, compute: Callable[[Path], dict | None]) -> StageRecord:
        key = sha256_json({"stage": stage, **key_parts})
        if self.resume:
            rec = self.cache.lookup(stage, key)
            if rec is not None:
                log.info("stage %s: cached (%s)", stage, rec.dir)
                self.records[stage] = rec
                return rec
        d = self.cache.begin(stage, key)
        start = time.perf_counter()
        try:
            extra = compute(d) or {}
        except MaqaError as exc:
            raise StageError(stage, str(exc)) from exc
        seconds = time.perf_counter() - start
        rec = self.cache.commit(stage, key, seconds, extra.get("hashed"),
                                extra.get("per_question_seconds"), extra.get("info"))
        log.info("stage %s: done in %.2fs", stage, seconds)
        self.records[stage] = rec
        return rec

    # -- stages ------------------------------------------------------------

    def stage_ingest(self) -> StageRecord:
        c = self.cfg.corpus
        parts = {"source": sha256_file(c.source), "chunk": c.chunk_size_words, "corpus_id": c.corpus_id}

        def compute(d: Path):
            m = ingest(c.source, d, c.chunk_size_words, c.corpus_id)
            return {"hashed": ["passages.jsonl"], "info": {"content_hash": m.content_hash,
                                                          "passage_count": m.passage_count}}

        self._store = None
        return self._stage("ingest", parts, compute)

    def stage_index(self) -> StageRecord:
        def compute(d: Path):
            index = BM25Index.build(self.store, self.store.manifest.content_hash)
            index.save(d)
            return {"info": index.stats.__dict__}

        return self._stage("index", {"corpus": self.records["ingest"].output_hash}, compute)

    def stage_embed(self) -> StageRecord:
        embedder = self.clients["embedder"]
        parts = {"corpus": self.records["ingest"].output_hash, "embedder": embedder.spec.fingerprint()}

        def compute(d: Path):
            index = build_embedding_cache(self.store, embedder, d)
            return {"info": {"dimension": index.dimension, "model_id": index.model_id}}

        return self._stage("embed", parts, compute)

    def _retrieval_key(self) -> dict:
        r = self.cfg.retrieval
        parts = {
            "kind": r.kind,
            "k_rrf": r.k_rrf,
            "bm25": [r.bm25.k1, r.bm25.b],
            "corpus": self.records["ingest"].output_hash,
        }
        if "index" in self.records:
            parts["index"] = self.records["index"].output_hash
        if "embed" in self.records:
            parts["embed"] = self.records["embed"].output_hash
            parts["embedder"] = self.clients["embedder"].spec.fingerprint()
        return parts

    def stage_pool(self) -> StageRecord:
        pool_size = self.cfg.retrieval.pool_size
        parts = self._retrieval_key() | {"pool_size": pool_size, "questions": self.questions_hash}

        def compute(d: Path):
            retriever = self.retriever()
            results = self._parallel(lambda g: retriever.build_pool(g.question, pool_size))
            for _, pool, _ in results:
                save_pool(pool, d)
            return {"per_question_seconds": {qid: s for qid, _, s in results},
                    "info": {"sizes": {qid: len(p) for qid, p, _ in results}}}

        return self._stage("pool", parts, compute)

    def pools(self) -> dict[str, RetrievalPool]:
        d = self.records["pool"].dir
        kind = self.cfg.retrieval.kind
        return {g.question.id: load_pool(d, g.question.id, kind) for g in self.golds}

    def stage_read(self) -> StageRecord:
        rc, k = self.cfg.reader, self.cfg.retrieval.top_k
        reader_client = self.clients["reader"]
        parts = {
            "mode": rc.mode,
            "top_k": k,
            "failure_budget": rc.failure_budget,
            "reader": reader_client.spec.fingerprint(),
            "questions": self.questions_hash,
            "corpus": self.records["ingest"].output_hash,
            "pool": self.records["pool"].output_hash if rc.mode != "closed_book" else None,
        }

        def compute(d: Path):
            pools = self.pools() if rc.mode != "closed_book" else {}
            reader = Reader(reader_client, self.store, max_workers=self.cfg.llm.max_concurrency,
                            failure_budget=rc.failure_budget)
            results = self._parallel(lambda g: reader.read(g.question, rc.mode, pools.get(g.question.id), k))
            save_candidates([cs for _, cs, _ in results], d / "candidates.jsonl")
            return {"per_question_seconds": {qid: s for qid, _, s in results},
                    "info": {"failures": {qid: cs.failures for qid, cs, _ in results}}}

        return self._stage("read", parts, compute)

    def candidates(self) -> dict[str, CandidateSet]:
        return load_candidates(Path(self.records["read"].dir) / "candidates.jsonl")

    def stage_verify(self) -> StageRecord:
        ipv = self.cfg.ipv
        parts = self._retrieval_key() | {
            "ipv": ipv.fingerprint(),
            "vqg": self.clients["vqg"].spec.fingerprint(),
            "verifier": self.clients["verifier"].spec.fingerprint(),
            "read": self.records["read"].output_hash,
            "pool": self.records["pool"].output_hash,
            "questions": self.questions_hash,
        }

        def compute(d: Path):
            pools, cands = self.pools(), self.candidates()
            generator = PlanGenerator(self.clients["vqg"], ipv.dataset_flavor, ipv.max_factual)
            verifier = Verifier(self.clients["verifier"], self.retriever(), self.store, ipv)

            def one(g: GoldRecord):
                plan = plan_for(g.question, ipv, generator)
                return plan, verifier.filter_candidates(cands[g.question.id], plan, pools[g.question.id])

            results = self._parallel(one)
            save_jsonl((plan.to_json() for _, (plan, _), _ in results), d / "plans.jsonl")
            save_jsonl(({"question_id": qid, **v.to_json()} for qid, (_, fr), _ in results for v in fr.verdicts),
                       d / "verdicts.jsonl")
            save_jsonl((fr.to_json() for _, (_, fr), _ in results), d / "filtered.jsonl")
            return {
                "per_question_seconds": {qid: s for qid, _, s in results},
                "info": {"vqg_fallbacks": sorted(qid for qid, (plan, _), _ in results if plan.fallback)},
            }

        return self._stage("verify", parts, compute)

    def final_predictions(self) -> dict[str, list[str]]:
        if "verify" in self.records:
            with open(Path(self.records["verify"].dir) / "filtered.jsonl", encoding="utf-8") as fh:
                rows = [json.loads(line) for line in fh if line.strip()]
            return {r["question_id"]: [c["surface"] for c in r["retained"]] for r in rows}
        return {qid: cs.surfaces for qid, cs in self.candidates().items()}

    def config_echo(self) -> dict:
        c = self.cfg
        return {
            "corpus_hash": self.store.manifest.content_hash,
            "questions_hash": self.questions_hash,
            "retrieval": c.to_dict()["retrieval"],
            "reader": c.to_dict()["reader"],
            "ipv": c.ipv.fingerprint() if c.ipv.enabled else {"enabled": False},
            "eval": {"judge": c.eval.judge},
            "models": {role: self.clients[role].spec.model_id for role in LLM_ROLES},
        }

    def _metrics_report(self, predictions: dict[str, list[str]]) -> dict:
        judge_client = self.clients["judge"]
        per_q, rows = [], []
        for g in self.golds:
            preds = predictions.get(g.question.id, [])
            if self.cfg.eval.judge:
                m = score_question_with_judge(preds, g, lambda p, gold: llm_judge_match(p, gold, judge_client))
            else:
                m = score_question(preds, g)
            per_q.append(m)
            rows.append({"question_id": g.question.id, "question_type": g.question.question_type,
                         "n_predictions": len(preds), **m.to_json()})
        macro = macro_average(per_q)
        return {
            "per_question": rows,
            "macro": {"precision": macro.precision, "recall": macro.recall, "f1": macro.f1},
            "config_echo": self.config_echo(),
        }

    def stage_evaluate(self) -> StageRecord:
        upstream = "verify" if "verify" in self.records else "read"
        parts = {
            "judge": self.cfg.eval.judge,
            "judge_model": self.clients["judge"].spec.fingerprint() if self.cfg.eval.judge else None,
            "questions": self.questions_hash,
            "upstream": [upstream, self.records[upstream].output_hash],
            "read": self.records["read"].output_hash,
            "echo": sha256_json(self.config_echo()),
        }

        def compute(d: Path):
            write_json(self._metrics_report(self.final_predictions()), d / METRICS_FILE)
            if upstream == "verify":
                reading = {qid: cs.surfaces for qid, cs in self.candidates().items()}
                write_json(self._metrics_report(reading), d / READING_METRICS_FILE)
            save_jsonl(({"question_id": qid, "answers": preds} for qid, preds in sorted(self.final_predictions().items())),
                       d / "predictions.jsonl")
            return None

        return self._stage("evaluate", parts, compute)

    # -- driver ------------------------------------------------------------

    def planned_stages(self, until: str = "evaluate") -> list[str]:
        if until not in STAGES:
            raise ConfigurationError(f"unknown stage {until!r}")
        kind = self.cfg.retrieval.kind
        needs_pool = self.cfg.reader.mode != "closed_book" or self.cfg.ipv.enabled
        plan = ["ingest"]
        if needs_pool or until in ("index", "embed", "pool"):
            if kind in ("sparse", "fused"):
                plan.append("index")
            if kind in ("dense", "fused"):
                plan.append("embed")
            plan.append("pool")
        plan.append("read")
        if self.cfg.ipv.enabled:
            plan.append("verify")
        plan.append("evaluate")
        if until not in plan:
            raise ConfigurationError(f"stage {until!r} is not part of this configuration")
        return plan[: plan.index(until) + 1]

    def run(self, until: str = "evaluate") -> dict:
        self.cfg.validate_paths()
        started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        run_id = config_hash(self.cfg)[:16]
        completed, failed, error = [], None, None
        stage_fns = {s: getattr(self, f"stage_{s}") for s in STAGES}
        for stage in self.planned_stages(until):
            try:
                stage_fns[stage]()
                completed.append(stage)
            except StageError as exc:
                failed, error = stage, str(exc)
                log.error("%s", exc)
                break
        manifest = self._manifest(run_id, started, completed, failed, error)
        run_dir = self.out / "runs" / run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        write_json(manifest, run_dir / "manifest.json")
        write_json(manifest, self.out / "manifest.json")
        if "evaluate" in completed:
            for name in (METRICS_FILE, READING_METRICS_FILE):
                src = Path(self.records["evaluate"].dir) / name
                if src.exists():
                    shutil.copyfile(src, run_dir / name)
                    shutil.copyfile(src, self.out / name)
        if failed:
            raise StageError(failed, error or "")
        return manifest

    def llm_calls(self) -> dict[str, dict[str, int]]:
        out = {}
        for role, client in self.clients.items():
            now, base = client.calls.snapshot(), self._baseline.get(role, {})
            diff = {op: n - base.get(op, 0) for op, n in now.items() if n - base.get(op, 0)}
            out[role] = diff
        return out

    def _manifest(self, run_id: str, started: str, completed: list[str], failed: str | None, error: str | None) -> dict:
        llm = self.llm_calls()
        retrieval = self._retriever.calls.snapshot() if self._retriever is not None else {}
        corpus_hash = self.records["ingest"].info.get("content_hash") if "ingest" in self.records else None
        return {
            "run_id": run_id,
            "started_at": started,
            "config": self.cfg.to_dict(),
            "corpus_hash": corpus_hash,
            "completed": completed,
            "failed": failed,
            "error": error,
            "stages": {s: r.to_json() for s, r in self.records.items()},
            "stage_timings": {s: r.seconds for s, r in self.records.items()},
            "per_question_seconds": {s: r.per_question_seconds for s, r in self.records.items()
                                     if r.per_question_seconds},
            "counters": {
                "llm": llm,
                "llm_total": sum(sum(v.values()) for v in llm.values()),
                "retrieval": retrieval,
            },
        }


def write_json(obj: Any, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def run_pipeline(cfg: RunConfig, resume: bool = True, clients: dict[str, LLMClient] | None = None,
                 until: str = "evaluate") -> dict:
    return Pipeline(cfg, resume=resume, clients=clients).run(until)


# -- sweeps and reports ------------------------------------------------------

SWEEP_AXES = {"k": "retrieval.top_k", "k_extra": "ipv.k_extra"}


@dataclass
class SweepRow:
    axis: str
    value: int
    precision: float | None
    recall: float | None
    f1: float | None
    status: str = "ok"


def sweep(cfg: RunConfig, axis: str, values: Sequence[int], resume: bool = True,
          clients: dict[str, LLMClient] | None = None) -> list[SweepRow]:
    """Run the pipeline once per value; shared stages are reused through the stage cache."""
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"sweep axis must be one of {sorted(SWEEP_AXES)}")
    if not values:
        raise ContractError("sweep needs at least one value")
    rows = []
    for v in values:
        try:
            point = cfg.with_overrides(**{SWEEP_AXES[axis]: v})
            Pipeline(point, resume=resume, clients=clients).run()
            with open(Path(point.run.output_dir) / "runs" / config_hash(point)[:16] / METRICS_FILE,
                      encoding="utf-8") as fh:
                macro = json.load(fh)["macro"]
            rows.append(SweepRow(axis, v, macro["precision"], macro["recall"], macro["f1"]))
        except MaqaError as exc:
            log.error("sweep point %s=%s failed: %s", axis, v, exc)
            rows.append(SweepRow(axis, v, None, None, None, status="failed"))
    return rows


def write_sweep_table(rows: Sequence[SweepRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "value", "precision", "recall", "f1", "status"])
        for r in rows:
            w.writerow([r.axis, r.value, _fmt(r.precision), _fmt(r.recall), _fmt(r.f1), r.status])


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


LATENCY_STAGES = ("pool", "read", "verify")


def report_latency(manifest: dict) -> dict[str, float]:
    """Mean wall-clock seconds per question for each per-question stage that ran."""
    per_q = manifest.get("per_question_seconds", {})
    counts = {len(v) for s, v in per_q.items() if s in LATENCY_STAGES}
    if not counts or counts == {0}:
        raise ContractError("manifest has no per-question timings")
    return {s: sum(per_q[s].values()) / len(per_q[s]) for s in LATENCY_STAGES if per_q.get(s)}


def arecall_curve(pipeline: Pipeline, ks: Sequence[int]) -> list[tuple[int, float]]:
    pools = pipeline.pools()
    return [(k, macro_arecall(pools, pipeline.golds, k, pipeline.store)) for k in ks]


def attach_records(pipeline: Pipeline, manifest: dict) -> None:
    """Point a fresh pipeline at the stage directories a finished run recorded."""
    for stage, rec in manifest["stages"].items():
        pipeline.records[stage] = StageRecord(stage, rec["key"], rec["dir"], rec["output_hash"], rec["seconds"],
                                              True, rec.get("per_question_seconds", {}), rec.get("info", {}))


def metrics_digest(path: str | Path) -> str:
    return sha256_file(path)


__all__ = [
    "Pipeline",
    "StageCache",
    "SweepRow",
    "arecall_curve",
    "metrics_digest",
    "report_latency",
    "run_pipeline",
    "sweep",
    "write_sweep_table",
]
