"""Sentence-level BLEU-4, ROUGE-2, ROUGE-L, simplified METEOR and entity-order error.

All functions take token lists.  Corpus scores are macro averages of the
sentence scores.
"""

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError


def ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def ngram_matches(hypothesis, references, n):
    """Clipped n-gram matches and the hypothesis n-gram total."""
    hyp = ngrams(hypothesis, n)
    max_ref = Counter()
    for ref in references:
        for gram, count in ngrams(ref, n).items():
            max_ref[gram] = max(max_ref[gram], count)
    matched = sum(min(count, max_ref[gram]) for gram, count in hyp.items())
    return matched, max(len(hypothesis) - n + 1, 0)


def brevity_penalty(hyp_len, ref_lens):
    # closest reference length, shorter one on ties
    r = min(ref_lens, key=lambda length: (abs(length - hyp_len), length))
    if hyp_len == 0:
        return 0.0
    if hyp_len > r:
        return 1.0
    return math.exp(1.0 - r / hyp_len)


def bleu4(hypothesis, references, max_order=4):
    """Sentence BLEU with add-one smoothing of zero-match orders above 1."""
    if not references:
        raise ContractError("bleu4 needs at least one reference")
    if not hypothesis:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_order + 1):
        matched, total = ngram_matches(hypothesis, references, n)
        if matched == 0:
            if n == 1:
                return 0.0
            matched, total = 1, total + 1
        log_sum += math.log(matched / total)
    bp = brevity_penalty(len(hypothesis), [len(r) for r in references])
    return bp * math.exp(log_sum / max_order)


def rouge2(hypothesis, reference):
    """Bigram recall with multiset clipping."""
    ref = ngrams(reference, 2)
    total = sum(ref.values())
    if total == 0:
        return 0.0
    hyp = ngrams(hypothesis, 2)
    return sum(min(c, hyp[g]) for g, c in ref.items()) / total


def lcs_length(a, b):
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rougeL(hypothesis, reference, beta=1.2):
    """LCS-based F-measure, recall weighted by ``beta``."""
    if not hypothesis or not reference:
        return 0.0
    lcs = lcs_length(hypothesis, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(hypothesis)
    r = lcs / len(reference)
    return (1 + beta**2) * p * r / (r + beta**2 * p)


def align_unigrams(hypothesis, reference):
    """Exact-match one-to-one alignment built by greedy longest-run tiling.

    Repeatedly takes the longest run of equal tokens that is still unaligned
    on both sides (earliest hypothesis position, then earliest reference
    position, on ties).  The result has the maximum possible number of
    matches; among those it favours long contiguous runs, i.e. few chunks.
    Returns sorted ``(hyp_index, ref_index)`` pairs.
    """
    free_h = [True] * len(hypothesis)
    free_r = [True] * len(reference)
    pairs = []
    while True:
        best = (0, 0, 0)
        for i in range(len(hypothesis)):
            if not free_h[i]:
                continue
            for j in range(len(reference)):
                if not free_r[j] or hypothesis[i] != reference[j]:
                    continue
                k = 1
                while (
                    i + k < len(hypothesis)
                    and j + k < len(reference)
                    and free_h[i + k]
                    and free_r[j + k]
                    and hypothesis[i + k] == reference[j + k]
                ):
                    k += 1
                if k > best[0]:
                    best = (k, i, j)
        k, i, j = best
        if k == 0:
            break
        for d in range(k):
            free_h[i + d] = free_r[j + d] = False
            pairs.append((i + d, j + d))
    return sorted(pairs)


def count_chunks(pairs):
    chunks = 0
    last = None
    for i, j in pairs:
        if last is None or (i, j) != (last[0] + 1, last[1] + 1):
            chunks += 1
        last = (i, j)
    return chunks


def meteor_simplified(hypothesis, reference, alpha=0.9, beta=3.0, gamma=0.5):
    """Exact-match METEOR: F_mean = 10PR/(R+9P), penalty 0.5*(chunks/matches)^3."""
    pairs = align_unigrams(hypothesis, reference)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    p = matches / len(hypothesis)
    r = matches / len(reference)
    f_mean = p * r / (alpha * p + (1 - alpha) * r)
    penalty = gamma * (count_chunks(pairs) / matches) ** beta
    return f_mean * (1 - penalty)


def levenshtein(a, b):
    """Unit-cost edit distance between two sequences."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def extract_entities(tokens, mention_set):
    return [t for t in tokens if t in mention_set]


def entity_order_error(input_mentions, generated, mention_set=None):
    """Edit distance between the input mentions and those found in ``generated``.

    ``mention_set`` decides which generated tokens count as entity mentions;
    it defaults to the input mentions themselves.
    """
    input_mentions = [m.mention if hasattr(m, "mention") else m for m in input_mentions]
    mention_set = set(input_mentions) if mention_set is None else set(mention_set)
    return levenshtein(list(input_mentions), extract_entities(generated, mention_set))


@dataclass
class MetricReport:
    bleu4: float
    rouge2: float
    rougeL: float
    meteor: float
    order_error_mean: float
    order_error_std: float
    order_error_rate: float
    count: int
    per_example: list = field(default=None, repr=False)

    def to_json(self, verbose=False):
        data = asdict(self)
        if not verbose:
            data.pop("per_example")
        return data

    def dumps(self, verbose=False):
        return json.dumps(self.to_json(verbose), indent=2)

    def table(self):
        header = f"{'ROUGE-2':>8} {'ROUGE-L':>8} {'BLEU-4':>8} {'METEOR':>8} {'order err':>16} {'err rate':>9}"
        row = (
            f"{100 * self.rouge2:8.2f} {100 * self.rougeL:8.2f} {100 * self.bleu4:8.2f} {100 * self.meteor:8.2f}"
            f" {self.order_error_mean:7.3f} ± {self.order_error_std:6.3f} {100 * self.order_error_rate:8.1f}%"
        )
        return header + "\n" + row


def score_pair(generated, gold, entities, mention_set=None):
    return {
        "bleu4": bleu4(generated, [gold]),
        "rouge2": rouge2(generated, gold),
        "rougeL": rougeL(generated, gold),
        "meteor": meteor_simplified(generated, gold),
        "order_error": entity_order_error(entities, generated, mention_set),
    }


def evaluate_corpus(pairs, mention_set=None, verbose=False):
    """Macro-averaged report over ``(generated, gold, entities)`` triples."""
    if not pairs:
        raise ContractError("evaluate_corpus needs at least one pair")
    scores = [score_pair(g, ref, ents, mention_set) for g, ref, ents in pairs]
    errors = np.array([s["order_error"] for s in scores], dtype=float)
    return MetricReport(
        bleu4=float(np.mean([s["bleu4"] for s in scores])),
        rouge2=float(np.mean([s["rouge2"] for s in scores])),
        rougeL=float(np.mean([s["rougeL"] for s in scores])),
        meteor=float(np.mean([s["meteor"] for s in scores])),
        order_error_mean=float(errors.mean()),
        order_error_std=float(errors.std()),
        order_error_rate=float(np.mean(errors > 0)),
        count=len(scores),
        per_example=scores if verbose else None,
    )
