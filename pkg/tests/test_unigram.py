import math
import random
from collections import Counter

import pytest

from tokswap.errors import DataError
from tokswap.unigram import (
    LOG_PROB_FLOOR,
    CandidateSet,
    build_lattice,
    corpus_log_likelihood,
    em_step,
    encode_unigram,
    prune,
    prune_losses,
    seed_candidates,
    segment_word,
    train_unigram,
    viterbi_word,
)
from tokswap.vocab import BASE_SIZE, MARKER, Vocabulary, decode, encode

from oracles import (
    best_segmentation,
    expected_piece_counts,
    marginal_log_prob,
)


def cand_set(probs: dict[str, float]) -> CandidateSet:
    total = sum(probs.values())
    log_probs = {s: math.log(p / total) for s, p in probs.items()}
    return CandidateSet(log_probs, {s: float(p) for s, p in probs.items()}, len(probs))


def random_candidates(rng: random.Random, words) -> CandidateSet:
    """Characters plus a random sample of substrings, random probabilities."""
    subs = set()
    for w in words:
        for i in range(len(w)):
            for j in range(i + 1, len(w) + 1):
                subs.add(w[i:j])
    chars = {s for s in subs if len(s) == 1}
    multi = sorted(s for s in subs if len(s) > 1)
    picked = chars | set(rng.sample(multi, k=min(len(multi), rng.randint(0, 8))))
    return cand_set({s: rng.uniform(0.05, 1.0) for s in sorted(picked)})


def random_word(rng: random.Random, alphabet="абв", lo=1, hi=6) -> str:
    return MARKER + "".join(
        rng.choice(alphabet) for _ in range(rng.randint(lo, hi - 1))
    )


# ── Seeding ─────────────────────────────────────────────────────────────────


def test_seed_counts_substring_occurrences():
    counts = Counter({f"{MARKER}abab": 3})
    cands = seed_candidates(counts, 500)
    assert cands.freqs["ab"] == 6.0  # two positions, frequency three
    assert cands.freqs[f"{MARKER}a"] == 3.0
    assert cands.freqs["a"] == 6.0
    assert cands.freqs[f"{MARKER}abab"] == 3.0


def test_seed_always_includes_characters():
    counts = Counter({f"{MARKER}xy": 1, f"{MARKER}z": 1})
    cands = seed_candidates(counts, 4)
    for ch in (MARKER, "x", "y", "z"):
        assert ch in cands.log_probs


def test_seed_caps_multichar_candidates():
    counts = Counter({f"{MARKER}abcd": 5})
    n_chars = 5
    cands = seed_candidates(counts, n_chars + 2)
    assert len(cands) == n_chars + 2
    multi = [s for s in cands.log_probs if len(s) > 1]
    # Every substring of the single word ties at count 5, so the surface
    # tie-break decides: "ab" and "abc" sort lowest among the candidates.
    assert sorted(multi) == ["ab", "abc"]


def test_seed_log_probs_normalized():
    counts = Counter({f"{MARKER}low": 2, f"{MARKER}lower": 1})
    cands = seed_candidates(counts, 40)
    assert math.isclose(sum(math.exp(lp) for lp in cands.log_probs.values()), 1.0)


def test_seed_below_char_inventory_rejected():
    counts = Counter({f"{MARKER}abcdefgh": 1})
    with pytest.raises(DataError):
        seed_candidates(counts, 3)


# ── Likelihood and EM against enumeration ───────────────────────────────────


def test_marginal_likelihood_matches_enumeration_hand_case():
    # One word, three pieces, two segmentations: [m][a] and [ma].
    cands = cand_set({MARKER: 0.4, "a": 0.2, f"{MARKER}a": 0.4})
    counts = Counter({f"{MARKER}a": 1})
    z = corpus_log_likelihood(cands, counts)
    assert math.isclose(z, math.log(0.4 * 0.2 + 0.4), rel_tol=1e-12)


def test_em_step_posteriors_hand_case():
    cands = cand_set({MARKER: 0.4, "a": 0.2, f"{MARKER}a": 0.4})
    counts = Counter({f"{MARKER}a": 1})
    stepped = em_step(cands, counts)
    # P(two-piece path) = 0.08/0.48 = 1/6, P(one-piece path) = 5/6.
    assert math.isclose(stepped.freqs[MARKER], 1 / 6, rel_tol=1e-12)
    assert math.isclose(stepped.freqs["a"], 1 / 6, rel_tol=1e-12)
    assert math.isclose(stepped.freqs[f"{MARKER}a"], 5 / 6, rel_tol=1e-12)
    # Normalized over 7/6 total mass.
    assert math.isclose(math.exp(stepped.log_probs[f"{MARKER}a"]), 5 / 7, rel_tol=1e-12)


def test_likelihood_matches_enumeration_random():
    rng = random.Random(42)
    for _ in range(30):
        words = [random_word(rng) for _ in range(rng.randint(1, 5))]
        counts = Counter()
        for w in words:
            counts[w] += rng.randint(1, 4)
        cands = random_candidates(rng, counts)
        expected = sum(
            freq * marginal_log_prob(w, cands.log_probs) for w, freq in counts.items()
        )
        assert math.isclose(
            corpus_log_likelihood(cands, counts), expected, rel_tol=1e-9, abs_tol=1e-9
        )


def test_em_expected_counts_match_enumeration_random():
    rng = random.Random(43)
    for _ in range(30):
        counts = Counter()
        for _ in range(rng.randint(1, 5)):
            counts[random_word(rng)] += rng.randint(1, 4)
        cands = random_candidates(rng, counts)
        stepped = em_step(cands, counts)
        expected: dict[str, float] = {}
        for w, freq in counts.items():
            for piece, e in expected_piece_counts(w, cands.log_probs).items():
                expected[piece] = expected.get(piece, 0.0) + freq * e
        for s in cands.log_probs:
            assert math.isclose(
                stepped.freqs[s], expected.get(s, 0.0), rel_tol=1e-9, abs_tol=1e-9
            ), s


def test_em_never_decreases_likelihood():
    rng = random.Random(44)
    for _ in range(10):
        counts = Counter()
        for _ in range(rng.randint(2, 6)):
            counts[random_word(rng, alphabet="абвг")] += rng.randint(1, 5)
        cands = random_candidates(rng, counts)
        prev = corpus_log_likelihood(cands, counts)
        for _ in range(10):
            cands = em_step(cands, counts)
            cur = corpus_log_likelihood(cands, counts)
            assert cur >= prev - 1e-9
            prev = cur


def test_em_fixed_point_on_characters_only():
    counts = Counter({f"{MARKER}aab": 2, f"{MARKER}ba": 3})
    cands = cand_set({MARKER: 1.0, "a": 1.0, "b": 1.0})
    once = em_step(cands, counts)
    twice = em_step(once, counts)
    for s in once.log_probs:
        assert math.isclose(once.log_probs[s], twice.log_probs[s], abs_tol=1e-12)


def test_unsegmentable_word_rejected():
    cands = cand_set({"a": 1.0})
    with pytest.raises(DataError):
        corpus_log_likelihood(cands, Counter({"ab": 1}))
    with pytest.raises(DataError):
        em_step(cands, Counter({"ab": 1}))


# ── Pruning ─────────────────────────────────────────────────────────────────


def test_prune_losses_match_leave_one_out_oracle():
    rng = random.Random(45)
    for _ in range(20):
        counts = Counter()
        for _ in range(rng.randint(1, 5)):
            counts[random_word(rng)] += rng.randint(1, 4)
        cands = random_candidates(rng, counts)
        losses = prune_losses(cands, counts)
        lp = cands.log_probs
        expected = {s: 0.0 for s in lp if len(s) > 1}
        for w, freq in counts.items():
            best = best_segmentation(w, lp)
            s1 = sum(lp[p] for p in best)
            for piece in set(p for p in best if len(p) > 1):
                masked = {s: v for s, v in lp.items() if s != piece}
                alt = best_segmentation(w, masked)
                s2 = sum(lp[p] for p in alt) if alt else float("-inf")
                expected[piece] += freq * (s1 - s2)
        for s, v in expected.items():
            assert math.isclose(losses[s], v, rel_tol=1e-9, abs_tol=1e-9), s


def test_prune_drops_unused_piece_first():
    counts = Counter({f"{MARKER}ab": 4})
    # "zz" can never appear in any word; its loss is zero.
    cands = cand_set({MARKER: 1.0, "a": 1.0, "b": 1.0, f"{MARKER}ab": 2.0, "zz": 1.0})
    pruned = prune(cands, 4 / 5, counts)
    assert "zz" not in pruned.log_probs
    assert f"{MARKER}ab" in pruned.log_probs


def test_prune_keeps_characters():
    counts = Counter({f"{MARKER}ab": 2})
    cands = cand_set({MARKER: 1.0, "a": 1.0, "b": 1.0, "ab": 1.0, f"{MARKER}ab": 1.0})
    pruned = prune(cands, 0.61, counts)
    for ch in (MARKER, "a", "b"):
        assert ch in pruned.log_probs


def test_prune_renormalizes():
    counts = Counter({f"{MARKER}ab": 2})
    cands = cand_set({MARKER: 1.0, "a": 1.0, "b": 1.0, "ab": 1.0, f"{MARKER}ab": 1.0})
    pruned = prune(cands, 0.61, counts)
    assert math.isclose(sum(math.exp(lp) for lp in pruned.log_probs.values()), 1.0)


def test_prune_rejects_bad_fraction():
    cands = cand_set({"a": 1.0})
    with pytest.raises(DataError):
        prune(cands, 1.0, Counter({"a": 1}))


# ── Viterbi inference ───────────────────────────────────────────────────────


def test_viterbi_matches_enumeration_random():
    rng = random.Random(46)
    for _ in range(150):
        word = random_word(rng, alphabet="абвг", lo=1, hi=8)
        cands = random_candidates(rng, [word])
        lp = cands.log_probs
        max_len = max(len(s) for s in lp)
        spans = viterbi_word(lp, max_len, word)
        got = [word[s:e] for s, e, _ in spans]
        assert got == list(best_segmentation(word, lp))


def test_viterbi_tie_prefers_fewer_tokens():
    lp = {"a": -1.0, "b": -1.0, "ab": -2.0}
    spans = viterbi_word(lp, 2, "ab")
    assert [p for _, _, p in spans] == ["ab"]


def test_viterbi_tie_prefers_leftmost_longest():
    lp = {"a": -1.0, "b": -1.0, "aa": -2.0, "ab": -2.0}
    spans = viterbi_word(lp, 2, "aab")
    assert [p for _, _, p in spans] == ["aa", "b"]


def test_viterbi_handles_words_beyond_tie_guard():
    lp = {"a": -1.0, "aa": -2.5}
    word = "a" * 600
    spans = viterbi_word(lp, 2, word)
    assert [p for _, _, p in spans] == ["a"] * 600


def test_fallback_span_for_unknown_char():
    lp = {"x": -1.0, "y": -1.0}
    spans = viterbi_word(lp, 1, "x€y")
    assert spans == [(0, 1, "x"), (1, 2, None), (2, 3, "y")]


def test_floored_multichar_piece_loses_to_byte_fallback():
    # "яя" sits at the log-prob floor and "я" alone has no piece, so the
    # two-byte-per-char fallback path outscores the floored piece.
    voc = Vocabulary.build("unigram", [("яя", LOG_PROB_FLOOR), (MARKER, -2.0)])
    seq = encode(voc, "яя")
    assert seq.ids[0] == voc.id_of(MARKER)
    assert all(voc.is_byte_id(i) for i in seq.ids[1:])
    assert decode(voc, seq) == "яя"


def test_floored_single_char_piece_still_used():
    # Fallback edges exist only for characters no piece covers, so a floored
    # single-character piece keeps winning its own position.
    voc = Vocabulary.build("unigram", [("я", LOG_PROB_FLOOR), (MARKER, -2.0)])
    seq = encode(voc, "я")
    assert voc.id_of("я") in seq.ids
    assert decode(voc, seq) == "я"


def test_segment_word_returns_fallback_chars():
    voc = Vocabulary.build("unigram", [("x", -1.0)])
    assert segment_word(voc, "x€") == ["x", "€"]


def test_lattice_edges_respect_max_len():
    lat = build_lattice("abcd", {"a": -1.0, "ab": -1.0, "abc": -1.0}, 2)
    assert all(end - start <= 2 for start, edges in enumerate(lat.edges) for end, _, _ in edges)


# ── End-to-end training ─────────────────────────────────────────────────────


def test_train_returns_requested_size(tiny_unigram_vocab):
    assert tiny_unigram_vocab.size == BASE_SIZE + 40
    assert tiny_unigram_vocab.kind == "unigram"


def test_train_scores_sorted(tiny_unigram_vocab):
    scores = [p.score for p in tiny_unigram_vocab.learned_pieces()]
    assert scores == sorted(scores, reverse=True)


def test_train_deterministic(small_corpus_counts):
    a = train_unigram(small_corpus_counts, BASE_SIZE + 50, seed_size=BASE_SIZE + 300)
    b = train_unigram(small_corpus_counts, BASE_SIZE + 50, seed_size=BASE_SIZE + 300)
    assert a == b


def test_train_scale_invariant(small_corpus_counts):
    doubled = Counter({w: 2 * f for w, f in small_corpus_counts.items()})
    a = train_unigram(small_corpus_counts, BASE_SIZE + 50, seed_size=BASE_SIZE + 300)
    b = train_unigram(doubled, BASE_SIZE + 50, seed_size=BASE_SIZE + 300)
    assert [p.surface for p in a.learned_pieces()] == [
        p.surface for p in b.learned_pieces()
    ]


def test_train_keeps_frequent_stem_whole(tiny_unigram_vocab):
    for word in ("низкий", "низкого", "низком", "низкие"):
        tokens = segment_word(tiny_unigram_vocab, MARKER + word)
        assert any("низ" in t for t in tokens), tokens


def test_train_rejects_small_budget():
    counts = Counter({f"{MARKER}ab": 2})
    with pytest.raises(DataError):
        train_unigram(counts, BASE_SIZE + 3, seed_size=BASE_SIZE + 100)
    with pytest.raises(DataError):
        train_unigram(counts, BASE_SIZE + 10, seed_size=BASE_SIZE + 5)


def test_encode_roundtrips_unseen_text(tiny_unigram_vocab):
    text = "низкий шум и €"
    seq = encode_unigram(tiny_unigram_vocab, text)
    assert decode(tiny_unigram_vocab, seq) == text
