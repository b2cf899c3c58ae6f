"""Caption scoring: tuple F-score over a closed grammar, and BLEU-n.

The parser is rule-based longest-match over the grammar lexicon: unknown
tokens become diagnostics (never errors), adjectives attach to the next
noun in the clause, and a preposition joins the preceding noun phrase to
the following one.  Tuple comparison is exact set match; there is no
synonym expansion because the lexicon is closed.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .corpus import GrammarSpec, default_grammar
from .tensor import ContractViolation

__all__ = [
    "ParsedCaption",
    "Score",
    "parse_caption_tuples",
    "spice_lite",
    "bleu_n",
    "corpus_bleu_n",
    "tokenize",
]

_EPS = 1e-9  # count credited to an n-gram order with zero matches


@dataclass
class ParsedCaption:
    tokens: list[str]
    tuples: frozenset
    diagnostics: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f1: float


def tokenize(text: str) -> list[str]:
    return [t.strip(".,!?;:") for t in text.lower().split()
            if t.strip(".,!?;:")]


def parse_caption_tuples(text: str, grammar: GrammarSpec | None = None
                         ) -> ParsedCaption:
    """Extract (noun), (noun, attr) and (subject, prep, object) tuples.

    Deterministic for any input text; unparseable input yields an empty
    tuple set plus one diagnostic per unmatched token.
    """
    g = grammar or default_grammar()
    raw = tokenize(text)
    diagnostics: list[str] = []
    stream: list[tuple[str, str]] = []
    for tok in raw:
        pos = g.pos_of(tok)
        if pos in ("UNKNOWN", "SPECIAL"):
            diagnostics.append(tok)
        else:
            stream.append((tok, pos))

    # clauses split on the conjunction
    clauses: list[list[tuple[str, str]]] = [[]]
    for tok, pos in stream:
        if pos == "CONJ":
            clauses.append([])
        else:
            clauses[-1].append((tok, pos))

    tuples: set = set()
    for clause in clauses:
        subject: str | None = None
        pending_prep: str | None = None
        i = 0
        n = len(clause)
        while i < n:
            tok, pos = clause[i]
            if pos in ("DET", "VERB"):
                i += 1
                continue
            if pos == "PREP":
                if subject is None:
                    diagnostics.append(tok)
                else:
                    pending_prep = tok
                i += 1
                continue
            # noun phrase: adjectives (and determiners) up to a noun
            adjs: list[str] = []
            while i < n and clause[i][1] in ("ADJ", "DET"):
                if clause[i][1] == "ADJ":
                    adjs.append(clause[i][0])
                i += 1
            if i < n and clause[i][1] == "NOUN":
                noun = clause[i][0]
                i += 1
                tuples.add((noun,))
                for a in adjs:
                    tuples.add((noun, a))
                if pending_prep is not None and subject is not None:
                    tuples.add((subject, pending_prep, noun))
                    pending_prep = None
                subject = noun
            else:
                diagnostics.extend(adjs)
        if pending_prep is not None:
            diagnostics.append(pending_prep)

    return ParsedCaption(tokens=raw, tuples=frozenset(tuples),
                         diagnostics=diagnostics)


def spice_lite(candidate: frozenset | set, gold: frozenset | set) -> Score:
    """Exact-match tuple F-score.

    An empty candidate set has precision 0 by definition (an unparseable
    answer must grade as non-human-quality).  Empty gold is a contract
    violation.
    """
    gold = frozenset(gold)
    candidate = frozenset(candidate)
    if not gold:
        raise ContractViolation("gold tuple set must be nonempty")
    inter = len(candidate & gold)
    p = inter / len(candidate) if candidate else 0.0
    r = inter / len(gold)
    f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return Score(precision=p, recall=r, f1=f1)


# ---------------------------------------------------------------------------
# BLEU


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n])
                   for i in range(len(tokens) - n + 1))


def _closest_ref_length(c: int, references) -> int:
    # closest reference length; ties resolve to the shorter reference
    return min((len(r) for r in references),
               key=lambda rl: (abs(rl - c), rl))


def _clipped_counts(candidate, references, k: int) -> tuple[int, int]:
    counts = _ngrams(candidate, k)
    total = sum(counts.values())
    if total == 0:
        return 0, 0
    max_counts: Counter = Counter()
    for ref in references:
        ref_counts = _ngrams(ref, k)
        for gram in counts:
            if ref_counts[gram] > max_counts[gram]:
                max_counts[gram] = ref_counts[gram]
    clipped = sum(min(c, max_counts[g]) for g, c in counts.items())
    return clipped, total


def bleu_n(candidate, references, n: int) -> float:
    """Sentence BLEU: geometric mean of clipped n-gram precisions for
    orders 1..n, times the brevity penalty e^{1-r/c} for candidates
    shorter than the closest reference.

    Orders longer than the candidate are skipped, so a candidate identical
    to a reference always scores 1.0.  Orders with zero matches receive an
    epsilon numerator (1e-9) instead of zeroing the whole score.
    """
    if n not in (1, 2, 3, 4):
        raise ContractViolation("n must be in 1..4")
    references = [list(r) for r in references]
    if not references:
        raise ContractViolation("references must be nonempty")
    candidate = list(candidate)
    c = len(candidate)
    if c == 0:
        return 0.0
    orders = range(1, min(n, c) + 1)
    log_sum = 0.0
    for k in orders:
        clipped, total = _clipped_counts(candidate, references, k)
        num = clipped if clipped > 0 else _EPS
        log_sum += math.log(num / total)
    geo = math.exp(log_sum / len(orders))
    r = _closest_ref_length(c, references)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * geo


def corpus_bleu_n(candidates, references_list, n: int) -> float:
    """Corpus BLEU: clipped counts and lengths pooled over all pairs
    before the geometric mean and brevity penalty."""
    if n not in (1, 2, 3, 4):
        raise ContractViolation("n must be in 1..4")
    if len(candidates) != len(references_list) or not candidates:
        raise ContractViolation("need one reference set per candidate")
    clipped = [0] * n
    totals = [0] * n
    c_len = 0
    r_len = 0
    for cand, refs in zip(candidates, references_list):
        cand = list(cand)
        refs = [list(r) for r in refs]
        if not refs:
            raise ContractViolation("references must be nonempty")
        if cand:
            c_len += len(cand)
            r_len += _closest_ref_length(len(cand), refs)
        for k in range(1, n + 1):
            cl, tot = _clipped_counts(cand, refs, k)
            clipped[k - 1] += cl
            totals[k - 1] += tot
    if c_len == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for k in range(n):
        if totals[k] == 0:
            continue
        num = clipped[k] if clipped[k] > 0 else _EPS
        log_sum += math.log(num / totals[k])
        orders += 1
    if orders == 0:
        return 0.0
    geo = math.exp(log_sum / orders)
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    return bp * geo
