"""Text-overlap metrics for plan evaluation: BLEU-1..4, ROUGE-L, METEOR, CIDEr.

Variant choices, stated because they change absolute scores:
  - BLEU is corpus-level with no smoothing; a zero precision at any order
    zeroes that order's score.
  - ROUGE-L is the LCS F-score with beta = 1.2 weighting recall, averaged
    over pairs.
  - METEOR runs exact and Porter-stem match stages only (no synonym or
    paraphrase tables); reports name the variant "METEOR-es".
  - CIDEr omits the CIDEr-D length penalty and uses
    idf = log(pair_count / (1 + document_frequency)) with one document per
    pair's reference set.

Everything here is a pure function; scoring the same pairs twice is
bit-identical.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

from .porter import stem

ROUGE_BETA = 1.2
METEOR_PENALTY_WEIGHT = 0.5
METEOR_PENALTY_POWER = 3
CIDER_SCALE = 10.0
CIDER_MAX_N = 4

_NON_TOKEN = re.compile(r"[^a-z0-9\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop characters outside [a-z0-9], split on whitespace."""
    return _NON_TOKEN.sub("", text.lower()).split()


@dataclass(frozen=True)
class TokenizedPair:
    candidate: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if not self.references:
            raise ValueError("a pair needs at least one reference")


def pair_from_text(candidate: str, references: list[str] | tuple[str, ...]) -> TokenizedPair:
    return TokenizedPair(
        candidate=tuple(tokenize(candidate)),
        references=tuple(tuple(tokenize(r)) for r in references),
    )


@dataclass(frozen=True)
class MetricReport:
    bleu: tuple[float, float, float, float]
    rouge_l: float
    meteor: float
    cider: float
    pair_count: int

    def to_dict(self) -> dict:
        return {
            "bleu": list(self.bleu),
            "rouge_l": self.rouge_l,
            "meteor": self.meteor,
            "cider": self.cider,
            "pair_count": self.pair_count,
            "variants": {
                "bleu": "corpus-level, no smoothing",
                "rouge_l": f"LCS F-score, beta={ROUGE_BETA}",
                "meteor": "METEOR-es (exact + Porter stem stages)",
                "cider": "no length penalty, idf=log(N/(1+df))",
            },
        }


def _ngrams(tokens: tuple[str, ...], n: int) -> Counter:
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def bleu(pairs: list[TokenizedPair], max_n: int) -> float:
    """Corpus BLEU with clipped modified precision and brevity penalty."""
    if not pairs:
        raise ValueError("bleu requires at least one pair")
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    log_precision_sum = 0.0
    for n in range(1, max_n + 1):
        clipped = 0
        total = 0
        for pair in pairs:
            counts = _ngrams(pair.candidate, n)
            total += sum(counts.values())
            max_ref: Counter = Counter()
            for ref in pair.references:
                for gram, count in _ngrams(ref, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            clipped += sum(min(c, max_ref[g]) for g, c in counts.items())
        if clipped == 0 or total == 0:
            return 0.0
        log_precision_sum += math.log(clipped / total)
    candidate_length = sum(len(p.candidate) for p in pairs)
    reference_length = 0
    for pair in pairs:
        # Closest reference length; ties go to the shorter reference.
        reference_length += min(
            (len(r) for r in pair.references),
            key=lambda length: (abs(length - len(pair.candidate)), length),
        )
    if candidate_length == 0:
        return 0.0
    brevity = math.exp(min(0.0, 1.0 - reference_length / candidate_length))
    return brevity * math.exp(log_precision_sum / max_n)


def lcs_length(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b):
            if token == other:
                current.append(previous[j] + 1)
            else:
                current.append(max(previous[j + 1], current[j]))
        previous = current
    return previous[-1]


def _rouge_pair(candidate: tuple[str, ...], reference: tuple[str, ...]) -> float:
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(candidate, reference)
    recall = lcs / len(reference)
    precision = lcs / len(candidate)
    beta_sq = ROUGE_BETA * ROUGE_BETA
    denominator = recall + beta_sq * precision
    if denominator == 0:
        return 0.0
    return (1 + beta_sq) * recall * precision / denominator


def rouge_l(pairs: list[TokenizedPair]) -> float:
    if not pairs:
        raise ValueError("rouge_l requires at least one pair")
    return sum(
        max(_rouge_pair(p.candidate, ref) for ref in p.references) for p in pairs
    ) / len(pairs)


def align_unigrams(
    candidate: tuple[str, ...], reference: tuple[str, ...]
) -> list[tuple[int, int]]:
    """Greedy left-to-right alignment: exact match stage, then stem stage.

    Each candidate token takes the first still-unmatched reference token
    that matches at the current stage.  Returns (candidate_index,
    reference_index) pairs.

    Greedy tie-breaking always reaches the maximum match count, so
    precision and recall are exact; only the fragmentation penalty can
    differ from a chunk-minimal alignment, whose computation is
    exponential in repeated tokens.
    """
    matched_ref = [False] * len(reference)
    matched_cand = [False] * len(candidate)
    alignment: list[tuple[int, int]] = []
    for key in (lambda t: t, stem):
        ref_keys = [key(t) for t in reference]
        for i, token in enumerate(candidate):
            if matched_cand[i]:
                continue
            want = key(token)
            for j, have in enumerate(ref_keys):
                if not matched_ref[j] and have == want:
                    matched_cand[i] = True
                    matched_ref[j] = True
                    alignment.append((i, j))
                    break
    alignment.sort()
    return alignment


def _chunk_count(alignment: list[tuple[int, int]]) -> int:
    chunks = 0
    previous: tuple[int, int] | None = None
    for ci, ri in alignment:
        if previous is None or ci != previous[0] + 1 or ri != previous[1] + 1:
            chunks += 1
        previous = (ci, ri)
    return chunks


def _meteor_pair(candidate: tuple[str, ...], reference: tuple[str, ...]) -> float:
    alignment = align_unigrams(candidate, reference)
    matches = len(alignment)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    chunks = _chunk_count(alignment)
    penalty = METEOR_PENALTY_WEIGHT * (chunks / matches) ** METEOR_PENALTY_POWER
    return f_mean * (1 - penalty)


def meteor(pairs: list[TokenizedPair]) -> float:
    if not pairs:
        raise ValueError("meteor requires at least one pair")
    return sum(
        max(_meteor_pair(p.candidate, ref) for ref in p.references) for p in pairs
    ) / len(pairs)


def _tfidf_vector(tokens: tuple[str, ...], n: int, idf: dict[tuple, float]) -> dict:
    return {
        gram: count * idf.get(gram, 0.0)
        for gram, count in _ngrams(tokens, n).items()
    }


def _cosine(u: dict, v: dict) -> float:
    norm_u = math.sqrt(sum(x * x for x in u.values()))
    norm_v = math.sqrt(sum(x * x for x in v.values()))
    if norm_u == 0 or norm_v == 0:
        return 0.0
    dot = sum(x * v[g] for g, x in u.items() if g in v)
    return dot / (norm_u * norm_v)


def cider(pairs: list[TokenizedPair]) -> float:
    """TF-IDF n-gram cosine consensus, scaled by 10 and averaged over n = 1..4."""
    if len(pairs) < 2:
        raise ValueError("cider requires at least 2 pairs (idf needs a corpus)")
    n_pairs = len(pairs)
    idf_by_n: list[dict[tuple, float]] = []
    for n in range(1, CIDER_MAX_N + 1):
        document_frequency: Counter = Counter()
        for pair in pairs:
            grams: set[tuple] = set()
            for ref in pair.references:
                grams.update(_ngrams(ref, n))
            document_frequency.update(grams)
        idf_by_n.append(
            {g: math.log(n_pairs / (1 + df)) for g, df in document_frequency.items()}
        )
    total = 0.0
    for pair in pairs:
        per_n = 0.0
        for n in range(1, CIDER_MAX_N + 1):
            idf = idf_by_n[n - 1]
            cand_vec = _tfidf_vector(pair.candidate, n, idf)
            similarity = sum(
                _cosine(cand_vec, _tfidf_vector(ref, n, idf))
                for ref in pair.references
            ) / len(pair.references)
            per_n += CIDER_SCALE * similarity
        total += per_n / CIDER_MAX_N
    return total / n_pairs


def evaluate_pairs(pairs: list[TokenizedPair]) -> MetricReport:
    """Score all metric families over one corpus of pairs."""
    if not pairs:
        raise ValueError("evaluate_pairs requires at least one pair")
    return MetricReport(
        bleu=tuple(bleu(pairs, n) for n in range(1, 5)),
        rouge_l=rouge_l(pairs),
        meteor=meteor(pairs),
        cider=cider(pairs),
        pair_count=len(pairs),
    )
