import logging
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from maqa.dataset import GoldAnswer, GoldRecord, Question, load_gold, load_qampari, load_romqa, write_gold
from maqa.errors import ContractError, InvalidInputError
from maqa.evaluation import (
    AnswerSetMetrics,
    arecall_at_k,
    llm_judge_match,
    macro_average,
    match,
    normalize_for_match,
    parse_judge_output,
    score_question,
    score_question_with_judge,
)
from maqa.llm import chat_key
from maqa.prompts import judge_prompt
from maqa.retrieval import RankedPassage, RetrievalPool

from conftest import make_passage
from oracles import set_metrics_oracle


def gold(*answers, qid="q"):
    return GoldRecord(Question(qid, "question?"), tuple(GoldAnswer(tuple(a) if isinstance(a, (list, tuple)) else (a,))
                                                       for a in answers))


def test_match_rules():
    assert match("carrie", GoldAnswer(("Carrie",)))
    assert match('  "Carrie"  ', GoldAnswer(("Carrie",)))
    assert match("The  Shining", GoldAnswer(("Shining", "the shining")))
    assert not match("Carrie (1976 film)", GoldAnswer(("Carrie",)))
    assert not match("Mésoscaphe", GoldAnswer(("Auguste Piccard",)))
    assert normalize_for_match("“Quoted”") == "quoted"


def test_score_question_examples():
    m = score_question(["A", "D"], gold("A", "B", "C"))
    assert (m.precision, m.recall, m.f1) == (0.5, pytest.approx(1 / 3), pytest.approx(0.4))
    assert (m.tp, m.fp, m.fn) == (1, 1, 2)
    assert score_question([], gold("A")) == AnswerSetMetrics(0.0, 0.0, 0.0, 0, 0, 1)
    m = score_question(["a1-alias1", "a1-alias2"], gold(["a1-alias1", "a1-alias2"]))
    assert (m.tp, m.precision, m.recall) == (1, 1.0, 1.0)
    m = score_question(["A", "a", " A "], gold("A", "B"))
    assert (m.precision, m.recall) == (1.0, 0.5)


def test_score_question_random_against_oracle():
    rng = random.Random(5)
    pool = ["alpha", "Alpha", "beta", "BETA ", "gamma", "delta", "eps", "zeta", "eta  theta", "eta theta"]
    for _ in range(200):
        golds = [rng.sample(pool, rng.randint(1, 3)) for _ in range(rng.randint(1, 8))]
        preds = [rng.choice(pool) for _ in range(rng.randint(0, 8))]
        m = score_question(preds, gold(*golds))
        assert (m.precision, m.recall, m.f1) == set_metrics_oracle(preds, golds)


names = st.sampled_from(["a", "b", "c", "d", "e", "f"])


@given(st.lists(names, max_size=6), st.lists(st.lists(names, min_size=1, max_size=2), min_size=1, max_size=5), st.randoms())
def test_order_invariance(preds, golds, rnd):
    m = score_question(preds, gold(*golds))
    p2, g2 = list(preds), list(golds)
    rnd.shuffle(p2)
    rnd.shuffle(g2)
    m2 = score_question(p2, gold(*g2))
    assert (m.precision, m.recall, m.f1) == (m2.precision, m2.recall, m2.f1)


@given(st.lists(names, max_size=6), st.lists(st.lists(names, min_size=1, max_size=2), min_size=1, max_size=5))
def test_adding_a_miss_lowers_precision_keeps_recall(preds, golds):
    before = score_question(preds, gold(*golds))
    after = score_question(preds + ["zzz-no-match"], gold(*golds))
    assert after.recall == before.recall
    if before.tp > 0:
        assert after.precision < before.precision


def test_macro_average():
    m = macro_average([AnswerSetMetrics(1, 0, 0, 0, 0, 0), AnswerSetMetrics(0, 1, 0, 0, 0, 0)])
    assert (m.precision, m.recall, m.f1) == (0.5, 0.5, 0.0)
    one = AnswerSetMetrics(0.25, 0.5, 1 / 3, 1, 3, 1)
    assert macro_average([one]) == one
    three = macro_average([one] * 3)
    assert (three.precision, three.recall, three.f1) == (0.25, 0.5, pytest.approx(1 / 3))
    with pytest.raises(ContractError):
        macro_average([])


class MemStore:
    def __init__(self, passages):
        self._by_id = {p.id: p for p in passages}

    def get_passage(self, pid):
        return self._by_id[pid]


def pool_store(texts):
    ps = [make_passage(f"p{i}:0", t, f"Title {i}") for i, t in enumerate(texts)]
    return RetrievalPool("q", "sparse", [RankedPassage(p.id, 1.0, i) for i, p in enumerate(ps, 1)]), MemStore(ps)


def test_arecall_examples():
    pool, store = pool_store(["The city of PARIS  is big", "nothing", "mentions GDPR here"])
    g = gold("Paris", "Lyon")
    assert arecall_at_k(pool, g, 3, store) == 0.5
    g2 = gold("paris", ["General Data Protection Regulation", "GDPR"])
    assert arecall_at_k(pool, g2, 2, store) == 0.5
    assert arecall_at_k(pool, g2, 3, store) == 1.0
    assert arecall_at_k(pool, g2, 99, store) == 1.0
    assert arecall_at_k(pool, gold("Title 1"), 2, store) == 1.0


@given(st.lists(st.sampled_from(["x", "y z", "w", "other text"]), min_size=1, max_size=8),
       st.lists(st.sampled_from(["x", "y z", "w", "q"]), min_size=1, max_size=3, unique=True))
def test_arecall_monotone_in_k(texts, answers):
    pool, store = pool_store(texts)
    g = gold(*answers)
    vals = [arecall_at_k(pool, g, k, store) for k in range(1, len(texts) + 2)]
    assert vals == sorted(vals)


@pytest.mark.parametrize("raw,expected", [("2", 2), (" 3.", 3), ("None", None), ('"none"', None),
                                          ("7", None), ("0", None), ("maybe 2", None), ("", None)])
def test_parse_judge_output(raw, expected):
    assert parse_judge_output(raw, 3) == expected


def test_parse_judge_warns_out_of_range(caplog):
    with caplog.at_level(logging.WARNING):
        assert parse_judge_output("7", 3) is None
    assert "out of range" in caplog.text


def test_llm_judge_match(stub):
    g = gold("Carrie", "Misery", "It")
    script = {chat_key(stub().request(judge_prompt("question?", ["Carrie", "Misery", "It"], p), max_tokens=8)): {"text": t}
              for p, t in [("misery (novel)", "2"), ("Dune", "None"), ("weird", "7")]}
    client = stub(script)
    assert llm_judge_match("misery (novel)", g, client) == 2
    assert llm_judge_match("Dune", g, client) is None
    assert llm_judge_match("weird", g, client) is None
    assert llm_judge_match("unscripted", g, client) is None
    m = score_question_with_judge(["misery (novel)", "Dune"], g, lambda p, gr: llm_judge_match(p, gr, client))
    assert (m.precision, m.recall) == (0.5, pytest.approx(1 / 3))


# -- gold files ----------------------------------------------------------------

def test_gold_roundtrip_and_validation(tmp_path):
    records = [gold("A", ["B", "b-alias"], qid="q1")]
    write_gold(records, tmp_path / "g.jsonl")
    assert load_gold(tmp_path / "g.jsonl", "x")[0].answers == records[0].answers
    (tmp_path / "bad.jsonl").write_text('{"question_id": "q", "question": "x?", "answers": []}\n')
    with pytest.raises(InvalidInputError, match="line 1"):
        load_gold(tmp_path / "bad.jsonl")
    (tmp_path / "dup.jsonl").write_text((tmp_path / "g.jsonl").read_text() * 2)
    with pytest.raises(InvalidInputError, match="duplicate"):
        load_gold(tmp_path / "dup.jsonl")


def test_external_loaders(tmp_path):
    (tmp_path / "qa.jsonl").write_text(
        '{"qid": "12__wikidata_intersection", "question_text": "Q?", '
        '"answer_list": [{"answer_text": "A", "aliases": ["A", "a2"]}, {"answer_text": "B"}]}\n')
    (rec,) = load_qampari(tmp_path / "qa.jsonl")
    assert rec.question.question_type == "intersection"
    assert [a.aliases for a in rec.answers] == [("A", "a2"), ("B",)]
    (tmp_path / "ro.jsonl").write_text('{"id": "r1", "question": "Q?", "answers": ["X", ["Y", "y"]]}\n')
    (rec,) = load_romqa(tmp_path / "ro.jsonl")
    assert [a.aliases for a in rec.answers] == [("X",), ("Y", "y")]
