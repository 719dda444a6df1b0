"""Prompt templates and the parsers for the responses they elicit."""

from __future__ import annotations

import logging
import re
from typing import Sequence

from .corpus import Passage

log = logging.getLogger(__name__)

PLACEHOLDER = "[answer]"

READING_TEMPLATE = """Read the following snippet(s) from Wikipedia documents carefully to find all the correct answers to the question. There could be multiple answers, one answer, or no answer. Do NOT generate additional descriptions/aliases/explanations! Generate the answers in the form of an unordered list as required below.

Start each answer with an asterisk and end with a new line. Your response should be in the following format if there are correct answers supported by the document snippets:

* Answer 1
* Answer 2
...

Or, if there is no correct answer, respond literally "There is no answer." without generating an unordered list.

REMINDERS:

* Please answer the question PURELY based on the documents provided. DO NOT use any additional knowledge not present in the documents.
* If the document is irrelevant to the question, do NOT use your own knowledge to answer it and just say "There is no answer".
* You should either give a list of answers as required above, or say "There is no answer". No other forms of response are accepted.

Document Snippet(s):
{documents}

Question: {question} """

# singular wording for one-passage prompts
_SINGULAR = (
    ("snippet(s) from Wikipedia documents", "snippet from a Wikipedia document"),
    ("supported by the document snippets", "supported by the document snippet"),
    ("based on the documents provided", "based on the document provided"),
    ("Document Snippet(s):", "Document Snippet:"),
)

CLOSED_BOOK_TEMPLATE = """Given a multi-answer web search question, generate ALL the answers that you know to this question. Do NOT generate additional descriptions/aliases/explanations! Please generate the answers in the form of an unordered list as required below:

Start each answer with an asterisk and end with a new line. Your response should look like this:
* Answer 1
* Answer 2
...

Now answer this question: {question}"""

VERIFICATION_TEMPLATE = """Read the following document(s) carefully to answer the true-or-false question below. If the document provided is irrelevant or insufficient, then answer "False". Answer "True" if there is sufficient evidence in the document. Do not add additional description or explanation, and the answer can only be "True" or "False". Begin your response with "Answer: ...".

{documents}

Question: {question}

Answer: """

VQG_INSTRUCTION = """I am trying to answer questions that have many correct answers. I now have a set of answers for each question but some of them are incorrect and noisy. So, based on my web search questions that have many correct answers, generate 2-3 verification questions so that I can use those questions to filter my answer sets. Verification questions should always be true-or-false questions. I will retain the answer item if an answer item appears true to the question and filter out the answer items otherwise. Here are some requirements for your response:
* You should always first ask an easy category-checking question to verify whether the answer entity belongs to the correct category.
* The second or third question should purely be based on my original web search query. NO questions shall use inferred facts or external knowledge.
* Start by thinking about what questions are suitable to ask. Begin your thought with "Thought: "
* After your thought, begin asking questions after "Verification Questions: ". Start each question with a new line and an asterisk. Do NOT generate anything else after the questions.
* In the verification question, when you refer to the answer item, please leave it as [answer] and enclose it with double quotes so that I can later fill it in with items in my answer set."""

VQG_NEGATION_RULE = """
* When you try to verify whether an answer does NOT have certain properties or features, ask the question in positive form and label the question with a [NEGATION] tag at the end of the question. I will retain the answers that appear false to the tagged question. """

QUESTION_PREFIX = "My web search question: "

VQG_EXAMPLES_DEFAULT = (
    ("Which album has John Reuben as performer?",
     """Thought: To verify if an answer item is a correct album with John Reuben as the performer, the first question should confirm whether the item belongs to the category of music albums. The subsequent question should directly relate to the web search query by asking if John Reuben is credited as the performer on the album.
Verification Questions:
* Is "[answer]" a music album?
* Is John Reuben credited as a performer on the music album "[answer]"?"""),
    ("What film was directed by Radha Mohan and produced by Prakash Raj?",
     """Thought: To filter answers effectively, the first question should confirm that the answer is a film. The second question will verify if the film was directed by Radha Mohan. The third question will confirm if the film was produced by Prakash Raj.
Verification Questions:
* Is "[answer]" a film?
* Was the film "[answer]" directed by Radha Mohan?
* Was the film "[answer]" produced by Prakash Raj?"""),
    ("Who was director of a movie penned by Christina Hodson?",
     """Thought: To filter answers effectively, the first question should confirm that the answer is a person. The second question will verify if there is a movie written by Christina Hodson and directed by this person.
Verification Questions:
* Is "[answer]" a director's name?
* Is there a movie that is directed by "[answer]" and written by Christina Hodson?"""),
)

VQG_EXAMPLES_NEGATION = (
    ("What highway system located in Tottori Prefecture is not maintained by Tottori Prefecture",
     """Thought: To verify if an answer item is a correct highway system located in Tottori Prefecture but not maintained by Tottori Prefecture, the first question should confirm whether the item belongs to the category of highway system. The subsequent questions should check whether this highway system is located in the Tottori Prefecture and meanwhile not maintained by Tottori Prefecture. I will use the [NEGATION] tag to filter out the highway systems maintained by the Tottori Prefecture.
Verification Questions:
* Is "[answer]" a highway system?
* Is the highway system "[answer]" located in Tottori Prefecture?
* Is the highway system "[answer]" maintained by Tottori Prefecture? [NEGATION]"""),
    ("Which Sunni Islam figures weren't Sufist?",
     """Thought: To filter answers effectively, the first question should confirm that the answer is a Sunni Islam figure. Then, the second question will verify whether this Sunni Islam figure was Sufist, which I will tag it with [NEGATION].
Verification Questions:
* Is "[answer]" a Sunni Islam figure?
* Was the Sunni Islam figure "[answer]" Sufist? [NEGATION]"""),
    ("People who played for the Sheffield Wednesday F.C. and the Lincoln City F.C.",
     """Thought: To filter answers effectively, the first question should confirm that the answer is a person's name. The second question will verify if this person played for Sheffield Wednesday F.C. The third question will check if this person also played for Lincoln City F.C.
Verification Questions:
* Is "[answer]" a person's name?
* Has "[answer]" ever played for the Sheffield Wednesday F.C.?
* Has "[answer]" ever played for the Lincoln City F.C.?"""),
)

SELF_REFLECTION_TEMPLATE = 'Is "[answer]" a correct answer to the question: {question}'

JUDGE_TEMPLATE = """You are grading a prediction for a question that has many correct answers. Decide whether the prediction refers to the same entity as one of the ground-truth answers below, allowing for formatting differences, aliases and minor wording variations.

Question: {question}

Ground-truth answers:
{answers}

Prediction: {prediction}

If the prediction matches a ground-truth answer, output only that answer's index number. Otherwise output "None". Do not output anything else."""


def format_passage(p: Passage) -> str:
    return f"(Title: {p.title}) {p.text}"


def format_passages(passages: Sequence[Passage]) -> str:
    return "\n".join(format_passage(p) for p in passages)


def reading_prompt(question: str, passages: Sequence[Passage]) -> str:
    text = READING_TEMPLATE
    if len(passages) == 1:
        for plural, singular in _SINGULAR:
            text = text.replace(plural, singular)
    else:
        text = text.replace("(s)", "s")
    return text.format(documents=format_passages(passages), question=question)


def closed_book_prompt(question: str) -> str:
    return CLOSED_BOOK_TEMPLATE.format(question=question)


def verification_prompt(question: str, passages: Sequence[Passage]) -> str:
    return VERIFICATION_TEMPLATE.format(documents=format_passages(passages), question=question)


def vqg_messages(question: str, negation_enabled: bool = False) -> tuple[tuple[str, str], ...]:
    """Few-shot dialogue: the instruction rides on the first user turn."""
    instruction = VQG_INSTRUCTION + (VQG_NEGATION_RULE if negation_enabled else "")
    examples = VQG_EXAMPLES_NEGATION if negation_enabled else VQG_EXAMPLES_DEFAULT
    messages: list[tuple[str, str]] = []
    for i, (ex_question, ex_answer) in enumerate(examples):
        user = QUESTION_PREFIX + ex_question
        if i == 0:
            user = f"{instruction}\n\n{user}"
        messages.append(("user", user))
        messages.append(("assistant", ex_answer))
    messages.append(("user", QUESTION_PREFIX + question))
    return tuple(messages)


def self_reflection_template(question: str) -> str:
    q = question.strip()
    return SELF_REFLECTION_TEMPLATE.format(question=q if q.endswith("?") else q + "?")


def judge_prompt(question: str, answers: Sequence[str], prediction: str) -> str:
    listing = "\n".join(f"{i}. {a}" for i, a in enumerate(answers, start=1))
    return JUDGE_TEMPLATE.format(question=question, answers=listing, prediction=prediction)


# -- parsing ---------------------------------------------------------------

# repeated markers ("* - A") are all stripped
_BULLET_RE = re.compile(r"^\s*(?:[*\-]\s*)+(.*?)\s*$")
_ABSTAIN_RE = re.compile(r"there\W+is\W+no\W+answer", re.IGNORECASE)


def bullets(raw: str) -> list[str]:
    out = []
    for line in raw.splitlines():
        m = _BULLET_RE.match(line)
        if m and m.group(1):
            out.append(m.group(1))
    return out


def parse_answer_list(raw: str) -> list[str]:
    """Bulleted answers from a reader response; [] for abstentions.

    Lines starting with ``*`` or ``-`` are answers and take precedence over
    an abstention phrase elsewhere in the text.  Never raises.
    """
    if not isinstance(raw, str):
        log.warning("reader output is not text: %r", raw)
        return []
    answers = bullets(raw)
    if answers:
        return answers
    if not _ABSTAIN_RE.search(raw) and raw.strip():
        log.warning("unparseable reader output treated as abstention: %r", raw[:80])
    return []
