"""Split-level evaluation and corpus-to-training-example adapters."""

from __future__ import annotations

import numpy as np

from .captcha import caption_text
from .corpus import CorpusSplit, GrammarSpec, default_grammar
from .metrics import (bleu_n, corpus_bleu_n, parse_caption_tuples, spice_lite,
                      tokenize)
from .model import TpgnParams
from .tensor import ContractViolation

__all__ = ["training_examples", "caption_targets", "evaluate_split",
           "eval_report_tsv"]


def caption_targets(split: CorpusSplit, grammar: GrammarSpec | None = None
                    ) -> list[list[int]]:
    """Token-id targets (canonical caption + end token) per scene."""
    g = grammar or default_grammar()
    out = []
    for caps in split.captions:
        ids = g.encode(tokenize(caps[0]))
        ids.append(g.end_id)
        out.append(ids)
    return out


def training_examples(split: CorpusSplit, v_bar: np.ndarray,
                      grammar: GrammarSpec | None = None):
    """(features, v_bar, target ids) triples for the SGD loop."""
    targets = caption_targets(split, grammar)
    return [(split.features[i], v_bar, targets[i])
            for i in range(len(split.scenes))]


def evaluate_split(params: TpgnParams, split: CorpusSplit, v_bar: np.ndarray,
                   grammar: GrammarSpec | None = None) -> dict:
    """Corpus BLEU-1..4 plus mean per-scene tuple F-score.

    ``spice_lite`` aggregates as the mean of per-scene f1 (the per-image
    mean convention); ``bleu_4_sentence_mean`` is also reported for
    reference.
    """
    g = grammar or default_grammar()
    if len(split.scenes) == 0:
        raise ContractViolation("empty split")
    candidates = []
    references = []
    f1s = []
    sent_b4 = []
    for i in range(len(split.scenes)):
        text = caption_text(params, split.features[i], v_bar, g)
        cand_tokens = tokenize(text)
        refs = [tokenize(c) for c in split.captions[i]]
        candidates.append(cand_tokens)
        references.append(refs)
        parsed = parse_caption_tuples(text, g)
        f1s.append(spice_lite(parsed.tuples, split.tuples[i]).f1)
        sent_b4.append(bleu_n(cand_tokens, refs, 4))
    out = {"n": len(split.scenes)}
    for n in (1, 2, 3, 4):
        out[f"bleu_{n}"] = corpus_bleu_n(candidates, references, n)
    out["spice_lite"] = float(np.mean(f1s))
    out["bleu_4_sentence_mean"] = float(np.mean(sent_b4))
    return out


def eval_report_tsv(rows: dict[str, dict]) -> str:
    """Tab-separated table, one row per split."""
    header = ["split", "n", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4",
              "spice_lite"]
    lines = ["\t".join(header)]
    for split_name, m in rows.items():
        lines.append("\t".join([
            split_name, str(m["n"]),
            f"{m['bleu_1']:.4f}", f"{m['bleu_2']:.4f}",
            f"{m['bleu_3']:.4f}", f"{m['bleu_4']:.4f}",
            f"{m['spice_lite']:.4f}",
        ]))
    return "\n".join(lines) + "\n"
