"""Run configuration.

Configs are YAML files with the sections below; every key is optional and
defaults are the recommended settings.  Relative paths resolve
against the config file's directory.  API keys never live here, only the
name of the environment variable holding them (``llm.<role>.api_key_env``).

.. code-block:: yaml

    corpus:    {source: docs.jsonl, chunk_size_words: 100}
    dataset:   {path: gold.jsonl, format: native}
    retrieval: {kind: fused, pool_size: 1000, top_k: 200, k_rrf: 60, bm25: {k1: 0.9, b: 0.4}}
    reader:    {mode: independent}
    llm:
      max_concurrency: 8
      reader:   {kind: http, base_url: http://localhost:8000/v1, model_id: llama-3.1-8b-instruct}
      embedder: {kind: http, base_url: http://localhost:8001/v1, model_id: nv-embed-v2}
    ipv:       {enabled: true, k_extra: 1}
    eval:      {judge: false}
    run:       {output_dir: out, seed: 0, max_parallel_questions: 4}
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError, ContractError
from .ipv import IPVConfig
from .llm.base import BackendSpec
from .reader import READING_MODES
from .retrieval.pool import RETRIEVER_KINDS

LLM_ROLES = ("reader", "vqg", "verifier", "judge", "embedder")


@dataclass
class CorpusConfig:
    source: str = ""
    chunk_size_words: int = 100
    corpus_id: str | None = None


@dataclass
class DatasetConfig:
    path: str = ""
    format: str = "native"
    tag: str | None = None


@dataclass
class BM25Config:
    k1: float = 0.9
    b: float = 0.4


@dataclass
class RetrievalConfig:
    kind: str = "fused"
    pool_size: int = 1000
    top_k: int = 200
    k_rrf: int = 60
    bm25: BM25Config = field(default_factory=BM25Config)

    def __post_init__(self):
        if self.kind not in RETRIEVER_KINDS:
            raise ConfigurationError(f"retrieval.kind must be one of {RETRIEVER_KINDS}")
        if self.pool_size < 1 or self.top_k < 1 or self.k_rrf < 1:
            raise ConfigurationError("retrieval sizes and k_rrf must be positive")


@dataclass
class ReaderConfig:
    mode: str = "independent"
    failure_budget: float = 0.5

    def __post_init__(self):
        if self.mode not in READING_MODES:
            raise ConfigurationError(f"reader.mode must be one of {READING_MODES}")


@dataclass
class LLMConfig:
    max_concurrency: int = 8
    reader: BackendSpec = field(default_factory=BackendSpec)
    vqg: BackendSpec | None = None
    verifier: BackendSpec | None = None
    judge: BackendSpec | None = None
    embedder: BackendSpec | None = None

    def spec(self, role: str) -> BackendSpec:
        return getattr(self, role) or self.reader


@dataclass
class EvalConfig:
    judge: bool = False
    arecall_ks: list[int] = field(default_factory=lambda: [1, 5, 10, 20, 50, 100, 200, 500, 1000])


@dataclass
class RunSettings:
    output_dir: str = "out"
    seed: int = 0
    max_parallel_questions: int = 4


@dataclass
class RunConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    reader: ReaderConfig = field(default_factory=ReaderConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    ipv: IPVConfig = field(default_factory=IPVConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunSettings = field(default_factory=RunSettings)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_overrides(self, **dotted: Any) -> "RunConfig":
        """Copy with ``section.key`` values replaced, e.g. ``{"ipv.k_extra": 0}``."""
        data = self.to_dict()
        for key, value in dotted.items():
            node = data
            *parents, leaf = key.split(".")
            for part in parents:
                node = node[part]
            if leaf not in node:
                raise ConfigurationError(f"unknown config key {key!r}")
            node[leaf] = value
        return from_dict(data)

    def validate_paths(self) -> None:
        for label, value in (("corpus.source", self.corpus.source), ("dataset.path", self.dataset.path)):
            if not value:
                raise ConfigurationError(f"{label} is required")
            if not Path(value).exists():
                raise ConfigurationError(f"{label} does not exist: {value}")
        for role in LLM_ROLES:
            spec = self.llm.spec(role)
            if spec.kind == "stub" and spec.script and not Path(spec.script).exists():
                raise ConfigurationError(f"llm.{role}.script does not exist: {spec.script}")


def _build(cls, data: Any, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown keys in {path or 'config'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        if sub is not None and value is not None:
            kwargs[name] = _build(sub, value, f"{path}.{name}" if path else name)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ContractError) as exc:
        raise ConfigurationError(f"{path or 'config'}: {exc}") from exc


_NESTED = {
    (RunConfig, "corpus"): CorpusConfig,
    (RunConfig, "dataset"): DatasetConfig,
    (RunConfig, "retrieval"): RetrievalConfig,
    (RunConfig, "reader"): ReaderConfig,
    (RunConfig, "llm"): LLMConfig,
    (RunConfig, "ipv"): IPVConfig,
    (RunConfig, "eval"): EvalConfig,
    (RunConfig, "run"): RunSettings,
    (RetrievalConfig, "bm25"): BM25Config,
    **{(LLMConfig, role): BackendSpec for role in LLM_ROLES},
}


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, copy.deepcopy(data), "")


def _resolve(base: Path, value: str | None) -> str | None:
    if not value:
        return value
    p = Path(value)
    return str(p if p.is_absolute() else (base / p).resolve())


def load_config(path: str | Path, output_dir: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML in {path}: {exc}") from exc
    cfg = from_dict(data)
    base = path.parent.resolve()
    cfg.corpus.source = _resolve(base, cfg.corpus.source)
    cfg.dataset.path = _resolve(base, cfg.dataset.path)
    cfg.run.output_dir = output_dir or _resolve(base, cfg.run.output_dir)
    for role in LLM_ROLES:
        spec = getattr(cfg.llm, role)
        if spec is not None and spec.script:
            spec.script = _resolve(base, spec.script)
    return cfg


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
