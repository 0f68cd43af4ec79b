"""A deliberately small next-token model for validating embedding remaps.

The body is one fixed dim x dim layer behind a tanh; only the embedding
matrix and the output head ever receive gradient updates, which mirrors an
adaptation run where the transformer body stays frozen. Everything runs in
float64 so finite-difference gradient checks are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .remap import apply_plan_rows, plan_remap
from .vocab import EOS_ID, Vocabulary, encode

DEFAULT_DIM = 32
DEFAULT_CONTEXT_K = 8
DEFAULT_BLOCK_SIZE = 128
INIT_STD = 0.5


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    batch_size: int = 32
    block_size: int = DEFAULT_BLOCK_SIZE
    warmup_steps: int = 50
    max_epochs: int = 5
    eval_every: float = 0.25  # fraction of an epoch between validation passes
    patience: int = 3  # evals without improvement before stopping
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if min(self.batch_size, self.block_size, self.warmup_steps, self.max_epochs) < 1:
            raise DataError("batch_size, block_size, warmup_steps, max_epochs must be >= 1")
        if not 0.0 < self.eval_every <= 1.0:
            raise DataError("eval_every must lie in (0, 1]")
        if not 0.0 < self.val_fraction < 1.0:
            raise DataError("val_fraction must lie in (0, 1)")


@dataclass
class FrozenBodyLM:
    embeddings: np.ndarray  # (V, d)
    body: np.ndarray  # (d, d), never updated
    head: np.ndarray  # (V, d)
    context_k: int

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.body = np.asarray(self.body, dtype=np.float64)
        self.head = np.asarray(self.head, dtype=np.float64)
        v, d = self.embeddings.shape
        if self.body.shape != (d, d) or self.head.shape != (v, d):
            raise DataError("inconsistent model matrix shapes")
        if self.context_k < 1:
            raise DataError("context_k must be >= 1")

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def clone(self) -> "FrozenBodyLM":
        return FrozenBodyLM(
            self.embeddings.copy(), self.body.copy(), self.head.copy(), self.context_k
        )


def new_model(
    vocab_size: int,
    dim: int = DEFAULT_DIM,
    context_k: int = DEFAULT_CONTEXT_K,
    seed: int = 0,
    init_std: float = INIT_STD,
) -> FrozenBodyLM:
    rng = np.random.default_rng(seed)
    emb = rng.normal(0.0, init_std, size=(vocab_size, dim))
    body = rng.normal(0.0, 1.0 / math.sqrt(dim), size=(dim, dim))
    head = rng.normal(0.0, init_std, size=(vocab_size, dim))
    return FrozenBodyLM(emb, body, head, context_k)


def forward(model: FrozenBodyLM, context_ids) -> np.ndarray:
    """Logits for one context window: mean embedding, fixed layer, head."""
    ctx = np.asarray(context_ids, dtype=np.int64)
    c = model.embeddings[ctx].mean(axis=0)
    h = np.tanh(model.body @ c)
    return model.head @ h


def _forward_batch(model: FrozenBodyLM, contexts: np.ndarray):
    c = model.embeddings[contexts].mean(axis=1)  # (B, d)
    h = np.tanh(c @ model.body.T)  # (B, d)
    logits = h @ model.head.T  # (B, V)
    return logits, h


def _softmax_ce(logits: np.ndarray, targets: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=1, keepdims=True)
    rows = np.arange(len(targets))
    losses = -np.log(np.maximum(probs[rows, targets], 1e-300))
    return losses.mean(), probs


def loss_and_grads(model: FrozenBodyLM, contexts, targets):
    """Mean cross-entropy over the batch plus gradients for the embedding
    and head matrices. The body gets no gradient by construction."""
    contexts = np.asarray(contexts, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if contexts.ndim == 1:
        contexts = contexts[None, :]
        targets = np.atleast_1d(targets)
    batch, k = contexts.shape

    logits, h = _forward_batch(model, contexts)
    loss, probs = _softmax_ce(logits, targets)

    dlogits = probs.copy()
    dlogits[np.arange(batch), targets] -= 1.0
    dlogits /= batch

    d_head = dlogits.T @ h
    dh = dlogits @ model.head
    dpre = dh * (1.0 - h * h)
    dc = dpre @ model.body

    d_emb = np.zeros_like(model.embeddings)
    np.add.at(d_emb, contexts.reshape(-1), np.repeat(dc / k, k, axis=0))
    return loss, d_emb, d_head


def make_examples(tokens, context_k: int, block_size: int, bos_id: int = 1):
    """Next-token examples from a flat token stream, packed into blocks with
    no word-boundary alignment. Left edge of each block pads with bos."""
    tokens = list(tokens)
    contexts: list[list[int]] = []
    targets: list[int] = []
    for base in range(0, len(tokens), block_size):
        block = tokens[base : base + block_size]
        for i, target in enumerate(block):
            lo = max(0, i - context_k)
            window = block[lo:i]
            pad = [bos_id] * (context_k - len(window))
            contexts.append(pad + window)
            targets.append(target)
    return np.array(contexts, dtype=np.int64), np.array(targets, dtype=np.int64)


def validation_loss(model: FrozenBodyLM, contexts: np.ndarray, targets: np.ndarray) -> float:
    total = 0.0
    n = len(targets)
    for lo in range(0, n, 1024):
        hi = min(n, lo + 1024)
        logits, _ = _forward_batch(model, contexts[lo:hi])
        loss, _ = _softmax_ce(logits, targets[lo:hi])
        total += loss * (hi - lo)
    return total / n


@dataclass
class TrainResult:
    model: FrozenBodyLM
    curve: list[tuple[int, float, float]]  # (step, train_loss, val_loss)
    initial_val_loss: float
    final_val_loss: float
    best_val_loss: float
    steps: int
    stopped_early: bool


def train(model: FrozenBodyLM, tokens, config: TrainConfig) -> TrainResult:
    """SGD on embeddings and head only, linear warmup then a constant rate,
    early stopping on the validation slice. The body is asserted bitwise
    unchanged at the end."""
    tokens = list(tokens)
    if len(tokens) < 2 * config.block_size:
        raise DataError(
            f"need at least {2 * config.block_size} tokens, got {len(tokens)}"
        )
    n_val = max(config.block_size, int(len(tokens) * config.val_fraction))
    train_tokens = tokens[:-n_val]
    val_tokens = tokens[-n_val:]
    ctx_train, tgt_train = make_examples(tokens=train_tokens, context_k=model.context_k, block_size=config.block_size)
    ctx_val, tgt_val = make_examples(tokens=val_tokens, context_k=model.context_k, block_size=config.block_size)

    body_before = model.body.copy()
    rng = np.random.default_rng(config.seed)
    n = len(tgt_train)
    steps_per_epoch = max(1, n // config.batch_size)
    eval_interval = max(1, int(steps_per_epoch * config.eval_every))

    initial_val = validation_loss(model, ctx_val, tgt_val)
    best_val = initial_val
    bad_evals = 0
    curve: list[tuple[int, float, float]] = []
    step = 0
    stopped = False
    run_loss = 0.0
    run_count = 0

    for _ in range(config.max_epochs):
        order = rng.permutation(n)
        for lo in range(0, n - config.batch_size + 1, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            loss, d_emb, d_head = loss_and_grads(model, ctx_train[batch], tgt_train[batch])
            if not math.isfinite(loss):
                raise RuntimeError(f"training loss diverged at step {step}")
            lr = config.learning_rate * min(1.0, (step + 1) / config.warmup_steps)
            model.embeddings -= lr * d_emb
            model.head -= lr * d_head
            run_loss += loss
            run_count += 1
            step += 1
            if step % eval_interval == 0:
                val = validation_loss(model, ctx_val, tgt_val)
                if not math.isfinite(val):
                    raise RuntimeError(f"validation loss diverged at step {step}")
                curve.append((step, run_loss / run_count, val))
                run_loss = 0.0
                run_count = 0
                if val < best_val - 1e-12:
                    best_val = val
                    bad_evals = 0
                else:
                    bad_evals += 1
                    if bad_evals >= config.patience:
                        stopped = True
                        break
        if stopped:
            break

    final_val = validation_loss(model, ctx_val, tgt_val)
    if not np.array_equal(model.body, body_before):
        raise RuntimeError("frozen body changed during training")
    return TrainResult(model, curve, initial_val, final_val, min(best_val, final_val), step, stopped)


def tokenize_corpus(vocab: Vocabulary, texts) -> list[int]:
    """Concatenate document token streams, eos-separated, for block packing."""
    out: list[int] = []
    for t in texts:
        text = t if isinstance(t, str) else t.text
        out.extend(encode(vocab, text).ids)
        out.append(EOS_ID)
    return out


@dataclass
class InitComparison:
    remapped_initial_val: float
    remapped_final_val: float
    random_initial_val: float
    random_final_val: float
    remapped_curve: list[tuple[int, float, float]]
    random_curve: list[tuple[int, float, float]]
    head_variant: str
    seed: int


def compare_inits(
    old_model: FrozenBodyLM,
    old_vocab: Vocabulary,
    new_vocab: Vocabulary,
    texts,
    config: TrainConfig,
    head_variant: str = "hm",
    seed: int = 0,
    init_std: float = INIT_STD,
) -> InitComparison:
    """Train the same architecture twice on the corpus retokenized with the
    new vocabulary: once from remapped old weights, once from a seeded
    random draw. The frozen body is inherited either way."""
    tokens = tokenize_corpus(new_vocab, texts)

    plan, _ = plan_remap(old_vocab, new_vocab)
    emb_init = apply_plan_rows(old_model.embeddings, plan)
    if head_variant == "hm":
        head_init = apply_plan_rows(old_model.head, plan)
    elif head_variant == "copy":
        head_init = emb_init.copy()
    else:
        raise DataError(f"unknown head variant {head_variant!r}")
    remapped = FrozenBodyLM(emb_init, old_model.body.copy(), head_init, old_model.context_k)

    rng = np.random.default_rng(seed)
    rand = FrozenBodyLM(
        rng.normal(0.0, init_std, size=(new_vocab.size, old_model.dim)),
        old_model.body.copy(),
        rng.normal(0.0, init_std, size=(new_vocab.size, old_model.dim)),
        old_model.context_k,
    )

    res_remap = train(remapped, tokens, config)
    res_rand = train(rand, tokens, config)
    return InitComparison(
        remapped_initial_val=res_remap.initial_val_loss,
        remapped_final_val=res_remap.final_val_loss,
        random_initial_val=res_rand.initial_val_loss,
        random_final_val=res_rand.final_val_loss,
        remapped_curve=res_remap.curve,
        random_curve=res_rand.curve,
        head_variant=head_variant,
        seed=seed,
    )


def run_init_comparison(
    texts_old,
    texts_new,
    old_vocab: Vocabulary,
    new_vocab: Vocabulary,
    dim: int = DEFAULT_DIM,
    context_k: int = DEFAULT_CONTEXT_K,
    config: TrainConfig | None = None,
    head_variant: str = "hm",
    seed: int = 0,
) -> tuple[InitComparison, TrainResult]:
    """Convenience wrapper: train the old model on its own tokenization of
    the source corpus, then run the init comparison on the target corpus."""
    config = config or TrainConfig()
    old_model = new_model(old_vocab.size, dim, context_k, seed=seed)
    old_tokens = tokenize_corpus(old_vocab, texts_old)
    old_result = train(old_model, old_tokens, config)
    cmp = compare_inits(
        old_result.model, old_vocab, new_vocab, texts_new, config,
        head_variant=head_variant, seed=seed,
    )
    return cmp, old_result
