import random
from collections import Counter

import pytest

from tokswap.corpus import Document
from tokswap.bpe import count_words, train_bpe
from tokswap.unigram import train_unigram
from tokswap.vocab import BASE_SIZE

CYR = "абвгдежзиклмнопрстуфхцчшыэюя"
LAT = "abcdefghijklmnopqrstuvwxyz"


def random_text(rng: random.Random, n_words=None, alphabet=CYR + LAT) -> str:
    """Space-separated gibberish; no boundary marker, no control chars."""
    n_words = n_words or rng.randint(1, 8)
    words = []
    for _ in range(n_words):
        words.append("".join(rng.choice(alphabet) for _ in range(rng.randint(1, 10))))
    return " ".join(words)


def docs_from_texts(texts) -> list[Document]:
    return [Document(f"d{i}", t) for i, t in enumerate(texts)]


@pytest.fixture(scope="session")
def small_corpus_counts() -> Counter:
    rng = random.Random(7)
    texts = [random_text(rng, alphabet=CYR) for _ in range(300)]
    return count_words(docs_from_texts(texts))


@pytest.fixture(scope="session")
def tiny_bpe_vocab():
    counts = count_words(
        [
            "низкий уровень воды",
            "низкого уровня шума",
            "на низком уровне",
            "вода и шум",
            "низкие цены на воду",
            "уровень цен низок",
        ]
        * 4
    )
    voc, table = train_bpe(counts, BASE_SIZE + 60)
    return voc, table


@pytest.fixture(scope="session")
def tiny_unigram_vocab():
    counts = count_words(
        [
            "низкий уровень воды",
            "низкого уровня шума",
            "на низком уровне",
            "вода и шум",
            "низкие цены на воду",
            "уровень цен низок",
        ]
        * 4
    )
    return train_unigram(counts, BASE_SIZE + 40, seed_size=BASE_SIZE + 400)
