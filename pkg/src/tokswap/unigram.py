"""Unigram language-model vocabulary training.

The trainer seeds a large candidate set from frequent substrings, runs EM
over per-word segmentation lattices in log space, and prunes candidates by
the Viterbi-approximated likelihood loss their removal would cause, keeping
single characters unconditionally so every word stays segmentable.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass

from .errors import DataError
from .vocab import (
    BASE_SIZE,
    BYTE_PIECE_SCORE,
    RESERVED_SURFACES,
    TokenSequence,
    Vocabulary,
    byte_fallback_ids,
    pretokenize,
    split_marked,
)

LOG_PROB_FLOOR = -1e9  # stands in for log(0) so scores stay finite

DEFAULT_MAX_PIECE_LEN = 16
DEFAULT_EM_ITERS = 2
DEFAULT_KEEP_FRACTION = 0.75

NEG_INF = float("-inf")


@dataclass
class CandidateSet:
    """Candidate pieces during training: surface -> log-probability, plus the
    frequency that produced it (corpus substring counts at seeding time,
    expected counts after an EM step)."""

    log_probs: dict[str, float]
    freqs: dict[str, float]
    seed_size: int

    def __len__(self) -> int:
        return len(self.log_probs)


@dataclass
class Lattice:
    """Segmentation lattice over one pretokenized word. edges[start] lists
    (end, surface, score) with end > start and word[start:end] == surface."""

    word: str
    edges: list[list[tuple[int, str, float]]]


def build_lattice(word: str, scores: dict[str, float], max_len: int) -> Lattice:
    n = len(word)
    edges: list[list[tuple[int, str, float]]] = [[] for _ in range(n)]
    for start in range(n):
        limit = min(n, start + max_len)
        for end in range(start + 1, limit + 1):
            piece = word[start:end]
            sc = scores.get(piece)
            if sc is not None:
                edges[start].append((end, piece, sc))
    return Lattice(word, edges)


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def seed_candidates(
    counts: Counter,
    seed_size: int,
    max_piece_len: int = DEFAULT_MAX_PIECE_LEN,
) -> CandidateSet:
    """Initial candidates: every single character plus the most frequent
    substrings up to max_piece_len, with log-probs proportional to their
    substring occurrence counts."""
    if not counts:
        raise DataError("empty word counts")
    sub_freq: Counter = Counter()
    for word, freq in sorted(counts.items()):
        n = len(word)
        for i in range(n):
            limit = min(n, i + max_piece_len)
            for j in range(i + 1, limit + 1):
                sub_freq[word[i : j]] += freq

    chars = sorted(s for s in sub_freq if len(s) == 1)
    if seed_size < len(chars):
        raise DataError(
            f"seed_size {seed_size} below the character inventory ({len(chars)})"
        )
    multi = [
        s for s in sub_freq if len(s) > 1 and s not in RESERVED_SURFACES
    ]
    multi.sort(key=lambda s: (-sub_freq[s], s))
    selected = chars + multi[: max(0, seed_size - len(chars))]

    total = sum(sub_freq[s] for s in selected)
    log_total = math.log(total)
    log_probs = {s: math.log(sub_freq[s]) - log_total for s in selected}
    freqs = {s: float(sub_freq[s]) for s in selected}
    return CandidateSet(log_probs, freqs, seed_size)


def _forward_backward(word: str, lat: Lattice) -> tuple[list[float], list[float], float]:
    n = len(word)
    alpha = [NEG_INF] * (n + 1)
    alpha[0] = 0.0
    for start in range(n):
        if alpha[start] == NEG_INF:
            continue
        base = alpha[start]
        for end, _, sc in lat.edges[start]:
            cand = base + sc
            alpha[end] = _logaddexp(alpha[end], cand)
    beta = [NEG_INF] * (n + 1)
    beta[n] = 0.0
    for start in range(n - 1, -1, -1):
        acc = NEG_INF
        for end, _, sc in lat.edges[start]:
            if beta[end] != NEG_INF:
                acc = _logaddexp(acc, sc + beta[end])
        beta[start] = acc
    return alpha, beta, alpha[n]


def corpus_log_likelihood(candidates: CandidateSet, counts: Counter) -> float:
    """Sum over words of freq times the log marginal probability of the word
    under the current piece distribution."""
    scores = candidates.log_probs
    max_len = max(len(s) for s in scores)
    total = 0.0
    for word, freq in sorted(counts.items()):
        lat = build_lattice(word, scores, max_len)
        _, _, z = _forward_backward(word, lat)
        if z == NEG_INF:
            raise DataError(f"word {word!r} has no segmentation under the candidates")
        total += freq * z
    return total


def em_step(candidates: CandidateSet, counts: Counter) -> CandidateSet:
    """One EM sweep: expected piece counts from forward-backward posteriors,
    then renormalize. Never decreases the corpus log-likelihood."""
    scores = candidates.log_probs
    max_len = max(len(s) for s in scores)
    expected: defaultdict[str, float] = defaultdict(float)
    for word, freq in sorted(counts.items()):
        lat = build_lattice(word, scores, max_len)
        alpha, beta, z = _forward_backward(word, lat)
        if z == NEG_INF:
            raise DataError(f"word {word!r} has no segmentation under the candidates")
        for start in range(len(word)):
            if alpha[start] == NEG_INF:
                continue
            for end, piece, sc in lat.edges[start]:
                if beta[end] == NEG_INF:
                    continue
                gamma = math.exp(alpha[start] + sc + beta[end] - z)
                expected[piece] += freq * gamma

    total = sum(expected[s] for s in sorted(expected))
    if total <= 0 or total != total:
        raise DataError("EM produced no expected counts")
    log_total = math.log(total)
    new_log_probs: dict[str, float] = {}
    new_freqs: dict[str, float] = {}
    for s in candidates.log_probs:
        e = expected.get(s, 0.0)
        if e != e:
            raise DataError(f"NaN expected count for piece {s!r}")
        new_freqs[s] = e
        if e > 0.0:
            new_log_probs[s] = math.log(e) - log_total
        else:
            new_log_probs[s] = LOG_PROB_FLOOR
    return CandidateSet(new_log_probs, new_freqs, candidates.seed_size)


def _viterbi_score(word: str, lat: Lattice, banned: str | None = None) -> tuple[float, list[str]]:
    """Best segmentation score and pieces, optionally with one piece masked.
    Plain max-score Viterbi; tie-breaks do not matter for training losses."""
    n = len(word)
    best = [NEG_INF] * (n + 1)
    back: list[tuple[int, str] | None] = [None] * (n + 1)
    best[0] = 0.0
    for start in range(n):
        if best[start] == NEG_INF:
            continue
        base = best[start]
        for end, piece, sc in lat.edges[start]:
            if piece == banned:
                continue
            cand = base + sc
            if cand > best[end]:
                best[end] = cand
                back[end] = (start, piece)
    if best[n] == NEG_INF:
        return NEG_INF, []
    pieces: list[str] = []
    pos = n
    while pos > 0:
        start, piece = back[pos]
        pieces.append(piece)
        pos = start
    pieces.reverse()
    return best[n], pieces


def prune_losses(candidates: CandidateSet, counts: Counter) -> dict[str, float]:
    """Likelihood loss attributed to deleting each multi-character piece:
    for every word whose Viterbi path uses the piece, the drop between the
    best path score and the best score with the piece masked."""
    scores = candidates.log_probs
    max_len = max(len(s) for s in scores)
    losses = {s: 0.0 for s in scores if len(s) > 1}
    for word, freq in sorted(counts.items()):
        lat = build_lattice(word, scores, max_len)
        s1, pieces = _viterbi_score(word, lat)
        if s1 == NEG_INF:
            raise DataError(f"word {word!r} has no segmentation under the candidates")
        for piece in sorted(set(p for p in pieces if len(p) > 1)):
            s2, _ = _viterbi_score(word, lat, banned=piece)
            losses[piece] += freq * (s1 - s2)
    return losses


def prune(candidates: CandidateSet, keep_fraction: float, counts: Counter) -> CandidateSet:
    """Drop the lowest-loss multi-character pieces until keep_fraction of the
    set remains. Single characters are never dropped, so every word stays
    segmentable. Kept log-probs are renormalized."""
    if not 0.0 < keep_fraction < 1.0:
        raise DataError(f"keep_fraction must lie in (0,1), got {keep_fraction}")
    n = len(candidates)
    chars = [s for s in candidates.log_probs if len(s) == 1]
    keep_n = max(len(chars), int(n * keep_fraction + 1e-9))
    if keep_n >= n:
        return candidates

    losses = prune_losses(candidates, counts)
    order = sorted(losses, key=lambda s: (losses[s], s))
    to_drop = set(order[: n - keep_n])

    kept_lp = {s: lp for s, lp in candidates.log_probs.items() if s not in to_drop}
    mass = NEG_INF
    for s in sorted(kept_lp):
        mass = _logaddexp(mass, kept_lp[s])
    new_log_probs = {s: lp - mass for s, lp in kept_lp.items()}
    new_freqs = {s: candidates.freqs.get(s, 0.0) for s in kept_lp}
    return CandidateSet(new_log_probs, new_freqs, candidates.seed_size)


def train_unigram(
    counts: Counter,
    vocab_size: int,
    seed_size: int | None = None,
    em_iters_per_round: int = DEFAULT_EM_ITERS,
    keep_fraction: float = DEFAULT_KEEP_FRACTION,
    max_piece_len: int = DEFAULT_MAX_PIECE_LEN,
) -> Vocabulary:
    """Seed, EM, prune until the learned piece budget fits, then one final
    EM polish. Deterministic for identical counts."""
    if not counts:
        raise DataError("empty word counts")
    chars = {ch for word in counts for ch in word}
    budget = vocab_size - BASE_SIZE
    if budget <= len(chars):
        raise DataError(
            f"vocab_size {vocab_size} too small: need more than "
            f"{BASE_SIZE + len(chars)} for this corpus"
        )
    if seed_size is None:
        seed_size = 4 * vocab_size
    if seed_size < vocab_size:
        raise DataError(f"seed_size {seed_size} below vocab_size {vocab_size}")

    cands = seed_candidates(counts, seed_size, max_piece_len)
    while len(cands) > budget:
        for _ in range(em_iters_per_round):
            cands = em_step(cands, counts)
        target = max(budget, int(len(cands) * keep_fraction))
        if target >= len(cands):
            target = len(cands) - 1
        cands = prune(cands, target / len(cands), counts)
    for _ in range(em_iters_per_round):
        cands = em_step(cands, counts)

    learned = sorted(cands.log_probs.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary.build("unigram", learned)


# ── Inference ──────────────────────────────────────────────────────────────


def _piece_scores(vocab: Vocabulary) -> tuple[dict[str, float], int]:
    scores = {p.surface: p.score for p in vocab.learned_pieces()}
    max_len = max((len(s) for s in scores), default=1)
    return scores, max_len


def viterbi_word(
    scores: dict[str, float], max_len: int, word: str
) -> list[tuple[int, int, str | None]]:
    """Best-scoring segmentation of one word as (start, end, surface) spans.

    Ties prefer fewer tokens, then the leftmost-longest pieces. Characters no
    piece covers become (start, start+1, None) byte-fallback spans, scored
    low enough that they never displace a real piece path.
    """
    n = len(word)
    # value per position: (score, -ntokens, token-length tuple), maximized.
    # The length tuple makes ties leftmost-longest; building it is quadratic,
    # so absurdly long words fall back to (score, -ntokens) alone.
    full_ties = n <= 512
    empty: tuple[int, ...] = ()
    best: list[tuple[float, int, tuple[int, ...]] | None] = [None] * (n + 1)
    back: list[tuple[int, str | None] | None] = [None] * (n + 1)
    best[0] = (0.0, 0, empty)
    for start in range(n):
        cur = best[start]
        if cur is None:
            continue
        sc0, neg0, lens0 = cur
        limit = min(n, start + max_len)
        ch = word[start]
        if ch not in scores:
            nbytes = len(ch.encode("utf-8"))
            lens = lens0 + (1,) if full_ties else empty
            cand = (sc0 + nbytes * BYTE_PIECE_SCORE, neg0 - nbytes, lens)
            end = start + 1
            if best[end] is None or cand > best[end]:
                best[end] = cand
                back[end] = (start, None)
        for end in range(start + 1, limit + 1):
            piece = word[start:end]
            sc = scores.get(piece)
            if sc is None:
                continue
            lens = lens0 + (end - start,) if full_ties else empty
            cand = (sc0 + sc, neg0 - 1, lens)
            if best[end] is None or cand > best[end]:
                best[end] = cand
                back[end] = (start, piece)
    spans: list[tuple[int, int, str | None]] = []
    pos = n
    while pos > 0:
        start, piece = back[pos]
        spans.append((start, pos, piece))
        pos = start
    spans.reverse()
    return spans


def segment_word(vocab: Vocabulary, word: str) -> list[str]:
    """Segment a bare word into surfaces; fallback chars stay as themselves."""
    scores, max_len = _piece_scores(vocab)
    return [
        piece if piece is not None else word[s:e]
        for s, e, piece in viterbi_word(scores, max_len, word)
    ]


def encode_unigram(vocab: Vocabulary, text: str) -> TokenSequence:
    scores, max_len = _piece_scores(vocab)
    marked = pretokenize(text)
    ids: list[int] = []
    offsets: list[tuple[int, int]] = []
    pos = 0
    for word in split_marked(marked):
        for start, end, piece in viterbi_word(scores, max_len, word):
            if piece is not None:
                ids.append(vocab.id_of(piece))
                offsets.append((pos + start, pos + end))
            else:
                bids = byte_fallback_ids(vocab, word[start])
                ids.append(bids[0])
                offsets.append((pos + start, pos + end))
                for b in bids[1:]:
                    ids.append(b)
                    offsets.append((pos + end, pos + end))
        pos += len(word)
    return TokenSequence(ids, offsets)
