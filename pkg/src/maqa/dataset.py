"""Questions, gold answer sets, and gold-file loaders.

Native gold format (JSON lines)::

    {"question_id": "q1", "question": "...", "question_type": "simple",
     "answers": [["Canonical", "alias", ...], ...]}

``load_qampari`` and ``load_romqa`` convert the public dataset layouts into
the same records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidInputError

QUESTION_TYPES = ("simple", "intersection", "composition", "unknown")


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    dataset_tag: str = ""
    question_type: str = "unknown"

    def __post_init__(self):
        if not self.text.strip():
            raise InvalidInputError(f"question {self.id!r} has empty text")
        if self.question_type not in QUESTION_TYPES:
            raise InvalidInputError(f"question {self.id!r}: unknown question_type {self.question_type!r}")


@dataclass(frozen=True)
class GoldAnswer:
    aliases: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "aliases", tuple(self.aliases))
        if not self.aliases or any(not a.strip() for a in self.aliases):
            raise InvalidInputError(f"gold answer needs non-empty aliases, got {self.aliases!r}")

    @property
    def canonical(self) -> str:
        return self.aliases[0]


@dataclass(frozen=True)
class GoldRecord:
    question: Question
    answers: tuple[GoldAnswer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "answers", tuple(self.answers))
        if not self.answers:
            raise InvalidInputError(f"question {self.question.id!r} has no gold answers")

    def to_json(self) -> dict:
        return {
            "question_id": self.question.id,
            "question": self.question.text,
            "question_type": self.question.question_type,
            "answers": [list(a.aliases) for a in self.answers],
        }


def _record(obj: dict, dataset_tag: str, lineno: int) -> GoldRecord:
    try:
        question = Question(
            id=str(obj["question_id"]),
            text=obj["question"],
            dataset_tag=obj.get("dataset", dataset_tag),
            question_type=obj.get("question_type") or "unknown",
        )
        answers = tuple(GoldAnswer(tuple(a)) for a in obj["answers"])
        return GoldRecord(question, answers)
    except KeyError as exc:
        raise InvalidInputError(f"missing field {exc.args[0]!r}", line=lineno) from None
    except InvalidInputError as exc:
        raise InvalidInputError(str(exc), line=lineno) from None


def _read_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InvalidInputError(f"invalid JSON: {exc.msg}", line=lineno) from None


def load_gold(path: str | Path, dataset_tag: str | None = None) -> list[GoldRecord]:
    tag = dataset_tag if dataset_tag is not None else Path(path).stem
    records = [_record(obj, tag, lineno) for lineno, obj in _read_jsonl(path)]
    ids = [r.question.id for r in records]
    if len(set(ids)) != len(ids):
        raise InvalidInputError(f"duplicate question ids in {path}")
    return records


def write_gold(records: list[GoldRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


def _qampari_type(qid: str) -> str:
    for suffix, qtype in (("simple", "simple"), ("intersection", "intersection"), ("comp", "composition")):
        if qid.endswith(suffix):
            return qtype
    return "unknown"


def load_qampari(path: str | Path) -> list[GoldRecord]:
    """QAMPARI layout: ``qid``, ``question_text``, ``answer_list[{answer_text, aliases}]``."""
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            answers = []
            for a in obj["answer_list"]:
                aliases = [a["answer_text"]] + [x for x in a.get("aliases", []) if x != a["answer_text"]]
                answers.append(aliases)
            out.append(_record({
                "question_id": obj["qid"],
                "question": obj["question_text"],
                "question_type": _qampari_type(obj["qid"]),
                "answers": answers,
            }, "qampari", lineno))
        except KeyError as exc:
            raise InvalidInputError(f"missing field {exc.args[0]!r}", line=lineno) from None
    return out


def load_romqa(path: str | Path) -> list[GoldRecord]:
    """RoMQA-style layout: ``id``, ``question``, ``answers`` as strings or alias lists."""
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            answers = [[a] if isinstance(a, str) else list(a) for a in obj["answers"]]
            out.append(_record({
                "question_id": obj["id"],
                "question": obj["question"],
                "answers": answers,
            }, "romqa", lineno))
        except KeyError as exc:
            raise InvalidInputError(f"missing field {exc.args[0]!r}", line=lineno) from None
    return out


LOADERS = {"native": load_gold, "qampari": load_qampari, "romqa": load_romqa}
