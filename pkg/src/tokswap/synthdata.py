"""Synthetic corpora with controlled morphology.

Real inflection tables and web corpora do not ship with the package, so
desk-scale experiments use generated text instead: words are built as
prefix + root + suffix over a Cyrillic syllable inventory, root choice is
Zipf-distributed, and every generated form is recorded together with its
root. The shapes mimic fusional morphology closely enough for segmentation
quality differences to show, while staying fully deterministic.

A second generator produces paired Latin/Cyrillic text with shared sentence
structure, used to emulate an old model meeting a new script.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass

from .corpus import Document
from .morpho import MorphRecord

_CONSONANTS = "бвгдзклмнпрстфхчшж"
_VOWELS = "аеиоуы"

NOUN_SUFFIXES = ["", "а", "у", "е", "ы", "ой", "ом", "ам", "ами", "ах", "ов", "ку"]
ADJ_SUFFIXES = ["ый", "ая", "ое", "ые", "ого", "ому", "ым", "ой", "ими"]
VERB_SUFFIXES = ["ть", "ет", "ют", "ал", "ала", "али", "ит", "ят", "у"]
PREFIXES = ["", "по", "за", "не", "при", "раз", "с"]
PREFIX_WEIGHTS = [70, 6, 6, 5, 5, 4, 4]

LATIN_LOANWORDS = ["web", "online", "smart", "test", "media", "format"]

_CATEGORY_SUFFIXES = {
    "noun": NOUN_SUFFIXES,
    "adj": ADJ_SUFFIXES,
    "verb": VERB_SUFFIXES,
}


@dataclass
class MorphCorpus:
    docs: list[Document]
    records: list[MorphRecord]
    word_freq: Counter


def _make_roots(rng: random.Random, n_roots: int) -> list[tuple[str, str]]:
    """Distinct (root, category) pairs; roots are 2-3 CV syllables plus a
    final consonant, so they end the way real stems tend to."""
    roots: list[tuple[str, str]] = []
    seen: set[str] = set()
    cats = ["noun", "noun", "adj", "verb"]
    while len(roots) < n_roots:
        syllables = rng.choice((2, 2, 3))
        root = "".join(
            rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(syllables)
        ) + rng.choice(_CONSONANTS)
        if root in seen:
            continue
        seen.add(root)
        roots.append((root, cats[len(roots) % len(cats)]))
    return roots


def _zipf_weights(n: int, exponent: float) -> list[float]:
    return [1.0 / (i + 1) ** exponent for i in range(n)]


def make_morph_corpus(
    seed: int = 0,
    n_roots: int = 400,
    n_docs: int = 200,
    target_bytes: int | None = None,
    zipf_exponent: float = 1.05,
    loanword_rate: float = 0.04,
) -> MorphCorpus:
    """Generate documents plus the (word, root) records behind them.

    With target_bytes set, documents are emitted until the total UTF-8 size
    of their text reaches it, whatever n_docs says.
    """
    rng = random.Random(seed)
    roots = _make_roots(rng, n_roots)
    root_weights = _zipf_weights(n_roots, zipf_exponent)
    suffix_weights = {
        cat: _zipf_weights(len(sfx), 0.8) for cat, sfx in _CATEGORY_SUFFIXES.items()
    }

    docs: list[Document] = []
    seen_words: dict[str, str] = {}
    word_freq: Counter = Counter()
    total_bytes = 0
    doc_idx = 0

    def sample_word() -> tuple[str, str]:
        ridx = rng.choices(range(n_roots), weights=root_weights, k=1)[0]
        root, cat = roots[ridx]
        suffixes = _CATEGORY_SUFFIXES[cat]
        suffix = rng.choices(suffixes, weights=suffix_weights[cat], k=1)[0]
        prefix = rng.choices(PREFIXES, weights=PREFIX_WEIGHTS, k=1)[0]
        return prefix + root + suffix, root

    while True:
        if target_bytes is None:
            if doc_idx >= n_docs:
                break
        elif total_bytes >= target_bytes:
            break
        sentences = []
        for _ in range(rng.randint(2, 5)):
            words = []
            for wi in range(rng.randint(4, 10)):
                if rng.random() < loanword_rate:
                    words.append(rng.choice(LATIN_LOANWORDS))
                    continue
                word, root = sample_word()
                seen_words.setdefault(word, root)
                word_freq[word] += 1
                if rng.random() < 0.06 and wi > 0:
                    word += ","
                words.append(word)
            sentences.append(" ".join(words) + ".")
        text = " ".join(sentences)
        docs.append(Document(f"doc{doc_idx:06d}", text, "synthetic"))
        total_bytes += len(text.encode("utf-8"))
        doc_idx += 1

    records = [MorphRecord(w, r) for w, r in sorted(seen_words.items())]
    return MorphCorpus(docs, records, word_freq)


# ── Paired-script corpus ───────────────────────────────────────────────────

_LAT_CONSONANTS = "bdfgklmnprstvz"
_LAT_VOWELS = "aeiou"

LAT_SUFFIXES = ["", "s", "ed", "ing", "er"]
CYR_SUFFIXES = ["", "ы", "ал", "ение", "ик"]


def make_bilingual_corpus(
    n_sentences: int,
    latin_fraction: float,
    seed: int = 0,
    n_stems: int = 40,
) -> list[str]:
    """Sentences over paired stem inventories: slot i can be realized as a
    Latin or a Cyrillic stem with the same distributional role, so a model
    that learned the structure in one script meets the same structure in
    the other."""
    rng = random.Random(seed)
    lat_stems: list[str] = []
    cyr_stems: list[str] = []
    seen: set[str] = set()
    while len(lat_stems) < n_stems:
        lat = "".join(
            rng.choice(_LAT_CONSONANTS) + rng.choice(_LAT_VOWELS) for _ in range(2)
        )
        cyr = "".join(
            rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(2)
        )
        if lat in seen or cyr in seen:
            continue
        seen.update((lat, cyr))
        lat_stems.append(lat)
        cyr_stems.append(cyr)

    stem_weights = _zipf_weights(n_stems, 1.0)
    suffix_weights = _zipf_weights(len(LAT_SUFFIXES), 1.0)
    sentences: list[str] = []
    for _ in range(n_sentences):
        words = []
        for _ in range(rng.randint(4, 8)):
            sidx = rng.choices(range(n_stems), weights=stem_weights, k=1)[0]
            fidx = rng.choices(range(len(LAT_SUFFIXES)), weights=suffix_weights, k=1)[0]
            if rng.random() < latin_fraction:
                words.append(lat_stems[sidx] + LAT_SUFFIXES[fidx])
            else:
                words.append(cyr_stems[sidx] + CYR_SUFFIXES[fidx])
        sentences.append(" ".join(words) + ".")
    return sentences
