"""tokswap: train and compare subword vocabularies, then carry a model's
embeddings over to the winner."""

from .vocab import (
    MARKER,
    TokenSequence,
    Vocabulary,
    decode,
    encode,
    load_vocab,
    pretokenize,
    save_vocab,
)
from .bpe import MergeTable, count_words, encode_bpe, train_bpe
from .unigram import CandidateSet, em_step, encode_unigram, prune, seed_candidates, train_unigram
from .corpus import (
    CorpusStats,
    Document,
    dedup_corpus,
    filter_script,
    minhash_signature,
    normalize_text,
)
from .morpho import (
    MorphRecord,
    TokenizerReport,
    efficiency_projection,
    evaluate_tokenizer,
    lcs_length,
    root_integrity,
)
from .remap import (
    EmbeddingMatrix,
    RemapPlan,
    init_lm_head,
    load_matrix,
    plan_remap,
    remap_embeddings,
    save_matrix,
)
from .tinylm import FrozenBodyLM, TrainConfig, compare_inits, new_model, train

__version__ = "0.1.0"
