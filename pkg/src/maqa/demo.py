"""A small self-contained corpus, gold file and scripted model for demos and tests.

``python -m maqa.demo DIR`` writes ``docs.jsonl``, ``gold.jsonl``,
``stub_script.json`` and ``config.yaml`` into DIR; ``maqa run --config
DIR/config.yaml`` then runs the whole pipeline offline.

The scripted model behaves like a plausible but imperfect reader: reading all
twelve passages yields six candidates, three of them wrong: a person plus two
films that each miss one of the two constraints.  One correct film,
"Monsoon Letters", only has its producer mentioned in a different passage,
so it survives verification only when extra evidence is retrieved.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import tempfile
from pathlib import Path

import yaml

from .retrieval.bm25 import tokenize

QUESTION_ID = "q-radha-prakash"
QUESTION = "What film was directed by Radha Mohan and produced by Prakash Raj?"

DOCS = [
    ("silver-lantern", "Silver Lantern",
     "Silver Lantern is a 2004 Tamil drama film directed by Radha Mohan and produced by Prakash Raj. "
     "The film follows a lighthouse keeper and his daughter and was praised for its screenplay."),
    ("quiet-harbor", "Quiet Harbor",
     "Quiet Harbor is a 2007 Tamil film directed by Radha Mohan. It was produced by Prakash Raj, "
     "who also plays the lead role of a retired fisherman."),
    ("monsoon-letters", "Monsoon Letters",
     "Monsoon Letters is a 2011 Tamil romantic film directed by Radha Mohan. The story is told through "
     "letters exchanged during one rainy season in Kodaikanal."),
    ("duet-movies", "Duet Movies",
     "Duet Movies is an Indian production company founded by Prakash Raj. The company produced Monsoon "
     "Letters in 2011, and its catalogue also includes several Kannada titles."),
    ("radha-mohan", "Radha Mohan",
     "Radha Mohan is an Indian film director and screenwriter who works mainly in Tamil cinema. He has "
     "frequently collaborated with the actor and producer Prakash Raj."),
    ("blue-orchid", "Blue Orchid",
     "Blue Orchid is a 2009 Tamil comedy film directed by Radha Mohan and produced by K. S. Ramesh. "
     "The soundtrack was composed by Vidyasagar."),
    ("golden-kite", "Golden Kite",
     "Golden Kite is a 2013 Tamil film directed by Vetri Selvan and produced by Prakash Raj. "
     "It tells the story of two brothers who build kites for a festival."),
    ("prakash-raj", "Prakash Raj",
     "Prakash Raj is an Indian actor, director and producer known for his work in Tamil, Telugu and "
     "Kannada cinema. He has won five National Film Awards."),
    ("tamil-cinema", "Tamil cinema",
     "Tamil cinema is the segment of Indian cinema dedicated to the production of films in the Tamil "
     "language, based in the Kodambakkam neighbourhood of Chennai."),
    ("chennai", "Chennai",
     "Chennai is the capital city of Tamil Nadu and a major centre for film production, music and "
     "classical dance in South India."),
    ("film-awards", "Tamil Nadu State Film Awards",
     "The Tamil Nadu State Film Awards are given each year by the state government to recognise "
     "achievements in Tamil cinema, including best film and best director."),
    ("kodaikanal", "Kodaikanal",
     "Kodaikanal is a hill town in Tamil Nadu known for its lake, its misty forests and its rainy "
     "season, and it is a frequent location for film shoots."),
]

GOLD_ANSWERS = [["Silver Lantern"], ["Quiet Harbor", "Quiet Harbour"], ["Monsoon Letters"]]

# passage title -> what the scripted reader extracts from it
READER_OUTPUT = {
    "Silver Lantern": ["Silver Lantern"],
    "Quiet Harbor": ["Quiet Harbor"],
    "Monsoon Letters": ["Monsoon Letters"],
    "Radha Mohan": ["Radha Mohan"],
    "Blue Orchid": ["Blue Orchid"],
    "Golden Kite": ["Golden Kite"],
}
CLOSED_BOOK_OUTPUT = ["Silver Lantern", "Blue Orchid", "Kanchivaram"]

VQG_OUTPUT = """Thought: To filter answers effectively, the first question should confirm that the answer is a film. The second question will verify if the film was directed by Radha Mohan. The third question will confirm if the film was produced by Prakash Raj.
Verification Questions:
* Is "[answer]" a film?
* Was the film "[answer]" directed by Radha Mohan?
* Was the film "[answer]" produced by Prakash Raj?"""

FILMS = {"Silver Lantern", "Quiet Harbor", "Monsoon Letters", "Blue Orchid", "Golden Kite", "Kanchivaram"}

# (candidate, aspect) -> passage titles whose presence in the evidence makes the verifier say True
SUPPORT = {
    ("Silver Lantern", "director"): {"Silver Lantern"},
    ("Quiet Harbor", "director"): {"Quiet Harbor"},
    ("Monsoon Letters", "director"): {"Monsoon Letters"},
    ("Blue Orchid", "director"): {"Blue Orchid"},
    ("Radha Mohan", "director"): {"Radha Mohan"},
    ("Silver Lantern", "producer"): {"Silver Lantern"},
    ("Quiet Harbor", "producer"): {"Quiet Harbor"},
    ("Monsoon Letters", "producer"): {"Duet Movies"},
    ("Golden Kite", "producer"): {"Golden Kite"},
    ("Radha Mohan", "producer"): {"Radha Mohan"},
}
SELF_REFLECTION_TRUE = {"Silver Lantern", "Quiet Harbor", "Blue Orchid"}

# retained answer sets the scripted model produces under each configuration
EXPECTED_READING = {"Silver Lantern", "Quiet Harbor", "Monsoon Letters", "Radha Mohan", "Blue Orchid", "Golden Kite"}
EXPECTED_RETAINED = {
    "full": {"Silver Lantern", "Quiet Harbor", "Monsoon Letters"},
    "k_extra=0": {"Silver Lantern", "Quiet Harbor"},
    "skip_factual": {"Silver Lantern", "Quiet Harbor", "Monsoon Letters", "Blue Orchid", "Golden Kite"},
    "skip_categorical": {"Silver Lantern", "Quiet Harbor", "Monsoon Letters", "Radha Mohan"},
    "self_reflection": {"Silver Lantern", "Quiet Harbor", "Blue Orchid"},
}
ABLATIONS = {
    "full": {},
    "k_extra=0": {"ipv.k_extra": 0},
    "skip_factual": {"ipv.skip_factual": True},
    "skip_categorical": {"ipv.skip_categorical": True},
    "self_reflection": {"ipv.self_reflection": True},
}

EMBED_DIM = 64
TRUE_DIST = {"True": 0.82, "true": 0.04, "False": 0.09}
FALSE_DIST = {"True": 0.11, "False": 0.78, "false": 0.05}

_TITLE_RE = re.compile(r"\(Title: ([^)]*)\)")
_QUESTION_RE = re.compile(r"\nQuestion: (.*?)\n\nAnswer: $", re.S)
_QUOTED_RE = re.compile(r'"([^"]+)"')


def hashed_embedding(text: str) -> list[float]:
    """Bag-of-words vector with tokens hashed into a fixed number of buckets."""
    vec = [0.0] * EMBED_DIM
    for tok in tokenize(text):
        digest = hashlib.sha256(tok.encode("utf-8")).digest()
        vec[digest[0] % EMBED_DIM] += 1.0 if digest[1] % 2 else 0.5
    vec[-1] += 0.01
    return vec


def _verdict(candidate: str, question: str, titles: set[str]) -> bool:
    if "correct answer to the question" in question:
        return candidate in SELF_REFLECTION_TRUE
    if question.endswith("a film?"):
        return candidate in FILMS
    aspect = "director" if "directed by" in question else "producer" if "produced by" in question else None
    return bool(SUPPORT.get((candidate, aspect), set()) & titles)


def responder(kind: str, payload) -> dict:
    """Scripted model behaviour for every prompt the fixture pipeline can issue."""
    if kind == "embed":
        return {"embedding": hashed_embedding(payload)}
    messages = payload.messages
    content = messages[-1][1]
    if len(messages) > 1 and content.startswith("My web search question:"):
        return {"text": VQG_OUTPUT}
    if content.startswith("Read the following document(s) carefully"):
        question = _QUESTION_RE.search(content).group(1)
        m = _QUOTED_RE.search(question)
        titles = set(_TITLE_RE.findall(content))
        ok = bool(m) and _verdict(m.group(1), question, titles)
        return {"text": "Answer: True" if ok else "Answer: False",
                "token_distribution": TRUE_DIST if ok else FALSE_DIST}
    if content.startswith("Given a multi-answer web search question"):
        return {"text": "".join(f"* {a}\n" for a in CLOSED_BOOK_OUTPUT)}
    if content.startswith("Read the following snippet"):
        answers = []
        for title in _TITLE_RE.findall(content):
            answers.extend(a for a in READER_OUTPUT.get(title, []) if a not in answers)
        if not answers:
            return {"text": "There is no answer."}
        return {"text": "".join(f"* {a}\n" for a in answers)}
    if content.startswith("You are grading a prediction"):
        pred = content.rsplit("Prediction: ", 1)[1].split("\n", 1)[0].strip()
        for i, aliases in enumerate(GOLD_ANSWERS, start=1):
            if pred.casefold() in {a.casefold() for a in aliases}:
                return {"text": str(i)}
        return {"text": "None"}
    return {"text": "There is no answer."}


def base_config() -> dict:
    return {
        "corpus": {"source": "docs.jsonl", "chunk_size_words": 100, "corpus_id": "demo"},
        "dataset": {"path": "gold.jsonl", "format": "native", "tag": "demo"},
        "retrieval": {"kind": "fused", "pool_size": 1000, "top_k": 12, "k_rrf": 60},
        "reader": {"mode": "independent"},
        "llm": {"max_concurrency": 4, "reader": {"kind": "stub", "model_id": "scripted", "script": "stub_script.json"}},
        "ipv": {"enabled": True, "k_extra": 1},
        "eval": {"judge": False, "arecall_ks": [1, 2, 3, 4, 6, 8, 12]},
        "run": {"output_dir": "out", "seed": 0, "max_parallel_questions": 2},
    }


def write_inputs(directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "docs.jsonl", "w", encoding="utf-8") as fh:
        for doc_id, title, text in DOCS:
            fh.write(json.dumps({"id": doc_id, "title": title, "text": text}) + "\n")
    with open(directory / "gold.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"question_id": QUESTION_ID, "question": QUESTION,
                             "question_type": "intersection", "answers": GOLD_ANSWERS}) + "\n")
    with open(directory / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(base_config(), fh, sort_keys=False)
    return directory / "config.yaml"


def recording_clients():
    from .config import LLM_ROLES
    from .llm import BackendSpec, StubClient

    shared = StubClient(BackendSpec(kind="stub", model_id="scripted"), responder=responder)
    return shared, {role: shared for role in LLM_ROLES}


def build_fixture(directory: str | Path) -> Path:
    """Write the inputs and record a stub script covering every demo configuration."""
    from .config import load_config
    from .pipeline import Pipeline, sweep

    config_path = write_inputs(directory)
    shared, clients = recording_clients()
    with tempfile.TemporaryDirectory() as tmp:
        cfg = load_config(config_path, output_dir=tmp)
        cfg.llm.reader.script = None
        variants = [cfg.with_overrides(**o) for o in ABLATIONS.values()]
        variants += [cfg.with_overrides(**{"ipv.enabled": False}),
                     cfg.with_overrides(**{"eval.judge": True}),
                     cfg.with_overrides(**{"reader.mode": "concatenated"}),
                     cfg.with_overrides(**{"reader.mode": "closed_book"})]
        for v in variants:
            Pipeline(v, clients=clients).run()
        sweep(cfg, "k", list(range(1, 13)), clients=clients)
        sweep(cfg.with_overrides(**{"ipv.enabled": False}), "k", list(range(1, 13)), clients=clients)
        sweep(cfg, "k_extra", [0, 1, 2, 3], clients=clients)
    shared.save_script(Path(directory) / "stub_script.json")
    return config_path


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="Write the offline demo corpus, gold set and scripted model.")
    parser.add_argument("directory")
    args = parser.parse_args(argv)
    path = build_fixture(args.directory)
    print(f"wrote demo inputs; run with: maqa run --config {path}")


if __name__ == "__main__":
    main()
