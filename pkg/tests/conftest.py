import json
import shutil
from pathlib import Path

import pytest

from maqa.config import load_config
from maqa.corpus import Passage, PassageStore, ingest
from maqa.llm import BackendSpec, StubClient

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "demo"


def make_passage(pid: str, text: str, title: str = "") -> Passage:
    doc, _, idx = pid.rpartition(":")
    return Passage(id=pid, title=title, text=text, doc_id=doc or pid, chunk_index=int(idx) if doc else 0)


def write_docs(path: Path, docs) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d) + "\n")
    return path


@pytest.fixture
def store_from(tmp_path):
    """Ingest ``[(doc_id, title, text), ...]`` and return the loaded store."""
    def build(docs, chunk_size_words=100):
        src = write_docs(tmp_path / "docs.jsonl", [{"id": i, "title": t, "text": x} for i, t, x in docs])
        ingest(src, tmp_path / "corpus", chunk_size_words=chunk_size_words)
        return PassageStore.load(tmp_path / "corpus")
    return build


@pytest.fixture
def stub():
    def make(script=None, responder=None, **spec_kwargs):
        return StubClient(BackendSpec(kind="stub", model_id="stub", **spec_kwargs), script=script, responder=responder)
    return make


@pytest.fixture
def demo_config(tmp_path):
    """The frozen demo fixture (inputs plus recorded stub script) copied into a scratch directory."""
    work = tmp_path / "demo"
    shutil.copytree(FIXTURE_DIR, work)
    return load_config(work / "config.yaml", output_dir=str(tmp_path / "out"))
