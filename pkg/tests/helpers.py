"""Shared fixtures and independent oracles for the test suite.

The oracles deliberately re-derive results from raw inputs (no inverted
index, no Counter-intersection shortcut) so they stay independent of the
code paths they check.
"""

from __future__ import annotations

import math

from respqa.agents import PipelineAgents, PromptTemplateSet
from respqa.llm import ROLE_TAGS, BackendRouter, ScriptedBackend, ScriptedRule
from respqa.retrieval import Document, tokenize

GOLDEN_EVIDENCE = (
    "Victor Varnado directed the black comedy Twisted Fortune, "
    "which starred Charlie Murphy, a brother of Eddie Murphy."
)
OVERPLANNING_QUESTION = (
    "Victor Varnado directed Twisted Fortune, which starred which brother of Eddie Murphy?"
)
REPETITIVE_QUESTION = (
    "What is Rachelle Amy Beinart's role in the film that follows a group of rebels on a mission?"
)
REPETITIVE_SUBQ_1 = "Who is Rachelle Amy Beinart?"
REPETITIVE_SUBQ_2 = (
    "What film mentioned in the provided passages features a group of rebels on a mission?"
)

# Substrings unique to one template each; safe scripted-rule matchers.
JUDGE_MARKER = "are you able to completely and accurately respond"
LOCAL_MARKER = "are you able to respond completely and accurately"
PLAN_MARKER = "[You Thought]:"
PLAN_RETRY_MARKER = "Do not repeat any of these questions"
SUMMARIZER_MARKER = "act as a professional writer"
GENERATE_MARKER = "Only give me the answer"


def film_corpus() -> list[Document]:
    """Documents that the over-planning question retrieves."""
    return [
        Document(
            "film-1",
            "Twisted Fortune",
            "Twisted Fortune is a black comedy film directed by Victor Varnado, "
            "starring Charlie Murphy.",
        ),
        Document(
            "film-2",
            "Charlie Murphy",
            "Charlie Murphy was an American actor and comedian, the older brother "
            "of Eddie Murphy.",
        ),
        Document(
            "film-3",
            "Eddie Murphy",
            "Eddie Murphy is an American actor and comedian known for stand-up "
            "specials and films.",
        ),
        Document(
            "film-4",
            "Victor Varnado",
            "Victor Varnado is a director and performer who directed Twisted Fortune.",
        ),
        Document(
            "film-5",
            "Unrelated comedy",
            "An unrelated comedy special features neither brother nor director.",
        ),
    ]


def offtopic_corpus() -> list[Document]:
    """Documents sharing no token with the repetitive-planning questions,
    so every retrieval in that case study comes back empty."""
    return [
        Document(
            "chem-1",
            "Superfluidity",
            "Helium atoms exhibit superfluid behavior near absolute zero temperatures.",
        ),
        Document(
            "chem-2",
            "Tunneling",
            "Quantum tunneling enables electron transport across thin insulating barriers.",
        ),
        Document(
            "chem-3",
            "Phonons",
            "Crystalline lattices vibrate; phonons carry thermal energy through solids.",
        ),
    ]


def overplanning_rules() -> list[ScriptedRule]:
    return [
        ScriptedRule(SUMMARIZER_MARKER, GOLDEN_EVIDENCE + " [DONE]"),
        ScriptedRule(JUDGE_MARKER, "Yes"),
        ScriptedRule(GENERATE_MARKER, "Charlie Murphy"),
    ]


def repetitive_rules() -> list[ScriptedRule]:
    # Retry rule first: the retry prompt also contains the base plan marker.
    return [
        ScriptedRule(PLAN_RETRY_MARKER, REPETITIVE_SUBQ_2),
        ScriptedRule(PLAN_MARKER, REPETITIVE_SUBQ_1),
        ScriptedRule(JUDGE_MARKER, "No"),
        ScriptedRule(LOCAL_MARKER, "No"),
        ScriptedRule(GENERATE_MARKER, "no answer found"),
    ]


def scripted_agents(
    rules: list[ScriptedRule], **agent_kwargs
) -> tuple[PipelineAgents, ScriptedBackend]:
    """One scripted conversation bound to all three roles."""
    backend = ScriptedBackend(rules)
    router = BackendRouter({role: backend for role in ROLE_TAGS})
    return PipelineAgents(router, PromptTemplateSet.load_default(), **agent_kwargs), backend


def bm25_brute_force(
    docs: list[Document], query: str, k: int, k1: float = 1.2, b: float = 0.75
) -> list[tuple[str, float]]:
    """Score every document straight from its raw text and sort.

    Independent of BM25Index: no inverted index, term frequencies counted
    per query term by scanning the token list.
    """
    token_lists = [tokenize(doc.text) for doc in docs]
    n = len(docs)
    avgdl = sum(len(tokens) for tokens in token_lists) / n if n else 0.0
    avgdl = avgdl or 1.0
    query_tokens = tokenize(query)
    results = []
    for doc, tokens in zip(docs, token_lists):
        score = 0.0
        for term in query_tokens:
            tf = sum(1 for tok in tokens if tok == term)
            if tf == 0:
                continue
            df = sum(1 for other in token_lists if term in other)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            norm = 1.0 - b + b * len(tokens) / avgdl
            score += idf * (tf * (k1 + 1.0)) / (tf + k1 * norm)
        if score > 0.0:
            results.append((doc.doc_id, score))
    results.sort(key=lambda item: (-item[1], item[0]))
    return results[:k]


def f1_brute_force(prediction_tokens: list[str], gold_tokens: list[str]) -> float:
    """Two-pointer multiset overlap on sorted token lists."""
    if not prediction_tokens and not gold_tokens:
        return 1.0
    pred = sorted(prediction_tokens)
    gold = sorted(gold_tokens)
    overlap = 0
    i = j = 0
    while i < len(pred) and j < len(gold):
        if pred[i] == gold[j]:
            overlap += 1
            i += 1
            j += 1
        elif pred[i] < gold[j]:
            i += 1
        else:
            j += 1
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(gold)
    return 2 * precision * recall / (precision + recall)
