"""Scoring functions: exact-match F1, ROUGE-L F1, smoothed sentence BLEU,
soft header matching, and open-IE tuple F1.

Tokenization for the text-level metrics is fixed and documented: lowercase,
split on whitespace and punctuation boundaries. Counts aggregate micro-style
(summed tp/fp/fn across a corpus, never a mean of per-instance F1).
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from itertools import permutations
from typing import Callable, Iterable, Optional, Sequence

from .model import Extraction

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class PRF:
    tp: float
    fp: float
    fn: float

    @property
    def precision(self) -> float:
        total = self.tp + self.fp
        return self.tp / total if total else 0.0

    @property
    def recall(self) -> float:
        total = self.tp + self.fn
        return self.tp / total if total else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def micro_prf(parts: Iterable[PRF]) -> PRF:
    tp = fp = fn = 0.0
    for part in parts:
        tp += part.tp
        fp += part.fp
        fn += part.fn
    return PRF(tp, fp, fn)


def exact_match_f1(pred: Extraction, gold: Extraction) -> PRF:
    """Multiset intersection of exact tuples (string equality on every slot)."""
    if pred.task is not gold.task:
        raise ValueError(f"task mismatch: {pred.task.value} vs {gold.task.value}")
    pred_counts = Counter(pred.items)
    gold_counts = Counter(gold.items)
    tp = sum((pred_counts & gold_counts).values())
    return PRF(tp, len(pred.items) - tp, len(gold.items) - tp)


# ---------------------------------------------------------------------------
# ROUGE-L


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_f1(pred: str, ref: str) -> float:
    pred_tokens = tokenize(pred)
    ref_tokens = tokenize(ref)
    if not pred_tokens and not ref_tokens:
        return 1.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    lcs = _lcs_length(pred_tokens, ref_tokens)
    p = lcs / len(pred_tokens)
    r = lcs / len(ref_tokens)
    return 2 * p * r / (p + r) if p + r else 0.0


# ---------------------------------------------------------------------------
# Sentence BLEU, 4-gram, uniform weights, smoothing method 3


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu_m3(candidate: str, reference: str, max_n: int = 4) -> float:
    """Sentence-level BLEU with brevity penalty and NIST geometric smoothing:
    the k-th zero n-gram precision is replaced by 1 / (2^k * denominator)."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    numerators: list[int] = []
    denominators: list[int] = []
    for n in range(1, max_n + 1):
        cand_ngrams = _ngram_counts(cand, n)
        ref_ngrams = _ngram_counts(ref, n)
        num = sum(min(c, ref_ngrams[g]) for g, c in cand_ngrams.items())
        numerators.append(num)
        denominators.append(max(1, len(cand) - n + 1))
    if numerators[0] == 0:
        return 0.0
    precisions: list[float] = []
    zeros_seen = 1
    for num, den in zip(numerators, denominators):
        if num == 0:
            precisions.append(1.0 / (2**zeros_seen * den))
            zeros_seen += 1
        else:
            precisions.append(num / den)
    c, r = len(cand), len(ref)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(math.log(p) for p in precisions) / max_n)


# ---------------------------------------------------------------------------
# Soft header matching (on-demand IE table headers)


def dice_similarity(a: str, b: str) -> float:
    ta, tb = set(tokenize(a)), set(tokenize(b))
    if not ta and not tb:
        return 1.0
    return 2 * len(ta & tb) / (len(ta) + len(tb))


def header_soft_f1(
    pred_headers: Sequence[str],
    gold_headers: Sequence[str],
    threshold: float = 0.5,
    similarity: Callable[[str, str], float] = dice_similarity,
) -> PRF:
    """One-to-one greedy matching on descending pairwise similarity; pairs with
    similarity >= threshold count as tp."""
    scored = [
        (similarity(p, g), i, j)
        for i, p in enumerate(pred_headers)
        for j, g in enumerate(gold_headers)
    ]
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_pred: set[int] = set()
    used_gold: set[int] = set()
    tp = 0
    for sim, i, j in scored:
        if sim < threshold:
            break
        if i in used_pred or j in used_gold:
            continue
        used_pred.add(i)
        used_gold.add(j)
        tp += 1
    return PRF(tp, len(pred_headers) - tp, len(gold_headers) - tp)


# ---------------------------------------------------------------------------
# Open IE tuple F1


def _slot_token_f1(a: Optional[str], b: Optional[str]) -> Optional[float]:
    """Token-multiset F1 between two slot values; None when both are absent."""
    a_empty = a is None or not a.strip()
    b_empty = b is None or not b.strip()
    if a_empty and b_empty:
        return None
    if a_empty or b_empty:
        return 0.0
    ca, cb = Counter(tokenize(a)), Counter(tokenize(b))
    overlap = sum((ca & cb).values())
    if not overlap:
        return 0.0
    p = overlap / sum(ca.values())
    r = overlap / sum(cb.values())
    return 2 * p * r / (p + r)


def tuple_pair_score(pred: Sequence[Optional[str]], gold: Sequence[Optional[str]]) -> float:
    """Slot-averaged token F1 over the slots present in either tuple."""
    width = max(len(pred), len(gold))
    scores = []
    for k in range(width):
        a = pred[k] if k < len(pred) else None
        b = gold[k] if k < len(gold) else None
        s = _slot_token_f1(a, b)
        if s is not None:
            scores.append(s)
    return sum(scores) / len(scores) if scores else 0.0


def _best_assignment(scores: list[list[float]]) -> float:
    """Exhaustive optimal one-to-one assignment on a |pred| x |gold| score matrix."""
    n_pred, n_gold = len(scores), len(scores[0]) if scores else 0
    if not n_pred or not n_gold:
        return 0.0
    if n_pred <= n_gold:
        return max(
            sum(scores[i][perm[i]] for i in range(n_pred))
            for perm in permutations(range(n_gold), n_pred)
        )
    return max(
        sum(scores[perm[j]][j] for j in range(n_gold))
        for perm in permutations(range(n_pred), n_gold)
    )


def _greedy_assignment(scores: list[list[float]]) -> float:
    pairs = [
        (scores[i][j], i, j) for i in range(len(scores)) for j in range(len(scores[0]))
    ]
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_i: set[int] = set()
    used_j: set[int] = set()
    total = 0.0
    for s, i, j in pairs:
        if i in used_i or j in used_j:
            continue
        used_i.add(i)
        used_j.add(j)
        total += s
    return total


def openie_tuple_f1(
    pred: Sequence[Sequence[Optional[str]]],
    gold: Sequence[Sequence[Optional[str]]],
    exhaustive_limit: int = 8,
) -> PRF:
    """One-to-one tuple matching maximizing summed slot-averaged token F1;
    matched pairs contribute fractionally to tp. Exhaustive assignment up to
    `exhaustive_limit` tuples per side, greedy beyond."""
    if not pred or not gold:
        return PRF(0.0, float(len(pred)), float(len(gold)))
    scores = [[tuple_pair_score(p, g) for g in gold] for p in pred]
    if max(len(pred), len(gold)) <= exhaustive_limit:
        tp = _best_assignment(scores)
    else:
        tp = _greedy_assignment(scores)
    return PRF(tp, len(pred) - tp, len(gold) - tp)
