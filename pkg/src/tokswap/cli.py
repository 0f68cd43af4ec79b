"""Command-line interface.

Every artifact-producing command writes a JSON manifest next to its output
(path plus ".manifest.json") recording the command, parameters, input
hashes, tool version and seed. The pipeline command uses those manifests to
skip stages whose inputs have not changed.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from . import bpe, corpus, manifest, morpho, remap, tinylm, unigram, vocab
from .errors import DataError, UsageError

log = logging.getLogger("tokswap")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tokswap", description=__doc__)
    p.add_argument("--seed", type=int, default=0, help="global random seed")
    p.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker hint; results are identical for any value",
    )
    p.add_argument("--quiet", action="store_true", help="suppress progress logging")
    sub = p.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("corpus", help="corpus cleaning and dedup")
    csub = pc.add_subparsers(dest="subcommand", required=True)
    cn = csub.add_parser("normalize", help="normalize text and filter scripts")
    cn.add_argument("--input", required=True)
    cn.add_argument("--output", required=True)
    cn.add_argument(
        "--keep-all-scripts",
        action="store_true",
        help="normalize only, keep every script",
    )
    cd = csub.add_parser("dedup", help="drop near-duplicate documents")
    cd.add_argument("--input", required=True)
    cd.add_argument("--output", required=True)
    cd.add_argument("--threshold", type=float, default=corpus.DEFAULT_THRESHOLD)
    cd.add_argument("--num-perm", type=int, default=corpus.DEFAULT_NUM_PERM)
    cd.add_argument("--bands", type=int, default=corpus.DEFAULT_BANDS)
    cd.add_argument("--rows", type=int, default=corpus.DEFAULT_ROWS)

    tb = sub.add_parser("train-bpe", help="train a byte-pair vocabulary")
    tb.add_argument("--input", required=True)
    tb.add_argument("--vocab-size", type=int, default=32000)
    tb.add_argument("--output", required=True)

    tu = sub.add_parser("train-unigram", help="train a unigram vocabulary")
    tu.add_argument("--input", required=True)
    tu.add_argument("--vocab-size", type=int, default=32000)
    tu.add_argument("--seed-size", type=int, default=None)
    tu.add_argument("--max-piece-len", type=int, default=unigram.DEFAULT_MAX_PIECE_LEN)
    tu.add_argument("--output", required=True)

    en = sub.add_parser("encode", help="tokenize text")
    en.add_argument("--vocab", required=True)
    en.add_argument("--text", help="encode this string instead of --input")
    en.add_argument("--input", help="file with one text per line")
    en.add_argument("--pieces", action="store_true", help="print surfaces, not ids")

    de = sub.add_parser("decode", help="token ids back to text")
    de.add_argument("--vocab", required=True)
    de.add_argument("--ids", help="space-separated ids; otherwise read stdin lines")

    ev = sub.add_parser("eval-morpho", help="root integrity and token statistics")
    ev.add_argument("--vocab", required=True)
    ev.add_argument("--dataset", required=True, help="TSV of word<TAB>root")
    ev.add_argument("--freq", help="TSV of word<TAB>count for weighting")
    ev.add_argument("--sample", help="corpus JSONL for token totals")
    ev.add_argument("--name", default=None)
    ev.add_argument("--report", required=True, help="where to write the JSON report")

    cp = sub.add_parser("compare", help="evaluate two vocabularies side by side")
    cp.add_argument("--vocab-a", required=True)
    cp.add_argument("--vocab-b", required=True)
    cp.add_argument("--dataset", required=True)
    cp.add_argument("--freq")
    cp.add_argument("--sample", help="corpus JSONL for the efficiency projection")
    cp.add_argument("--report-a")
    cp.add_argument("--report-b")

    rm = sub.add_parser("remap", help="carry embeddings onto a new vocabulary")
    rm.add_argument("--old-vocab", required=True)
    rm.add_argument("--new-vocab", required=True)
    rm.add_argument("--old-emb", required=True)
    rm.add_argument("--old-head")
    rm.add_argument("--head-variant", choices=("copy", "hm"), default="copy")
    rm.add_argument("--out-emb", required=True)
    rm.add_argument("--out-head")
    rm.add_argument("--report")

    tl = sub.add_parser("tinylm", help="small frozen-body model experiments")
    tsub = tl.add_subparsers(dest="subcommand", required=True)
    tt = tsub.add_parser("train", help="train on a corpus")
    tt.add_argument("--corpus", required=True)
    tt.add_argument("--vocab", required=True)
    tt.add_argument("--dim", type=int, default=tinylm.DEFAULT_DIM)
    tt.add_argument("--context-k", type=int, default=tinylm.DEFAULT_CONTEXT_K)
    tt.add_argument("--config", help="JSON file with TrainConfig overrides")
    tt.add_argument("--out-prefix", required=True)
    tt.add_argument("--curve", help="write the loss curve CSV here")
    ti = tsub.add_parser("compare-inits", help="remapped init against random init")
    ti.add_argument("--old-corpus", required=True)
    ti.add_argument("--corpus", required=True)
    ti.add_argument("--old-vocab", required=True)
    ti.add_argument("--new-vocab", required=True)
    ti.add_argument("--dim", type=int, default=tinylm.DEFAULT_DIM)
    ti.add_argument("--context-k", type=int, default=tinylm.DEFAULT_CONTEXT_K)
    ti.add_argument("--config", help="JSON file with TrainConfig overrides")
    ti.add_argument("--head-variant", choices=("copy", "hm"), default="hm")
    ti.add_argument("--out", required=True)

    pl = sub.add_parser("pipeline", help="run the full substitution pipeline")
    pl.add_argument("--config", required=True)

    rp = sub.add_parser("report", help="print evaluation reports side by side")
    rp.add_argument("reports", nargs="+")

    return p


# ── Helpers ────────────────────────────────────────────────────────────────


def _write_with_manifest(out_path, command, parameters, input_paths, seed):
    hashes = {os.path.basename(p): manifest.sha256_file(p) for p in input_paths}
    m = manifest.RunManifest(command, parameters, hashes, seed=seed)
    manifest.write_manifest(m, str(out_path) + ".manifest.json")


def _stage_current(out_path, command, parameters, input_paths, seed) -> bool:
    mpath = str(out_path) + ".manifest.json"
    if not os.path.exists(out_path) or not os.path.exists(mpath):
        return False
    try:
        old = manifest.load_manifest(mpath)
    except DataError:
        return False
    hashes = {os.path.basename(p): manifest.sha256_file(p) for p in input_paths}
    fresh = manifest.RunManifest(command, parameters, hashes, seed=seed)
    return old.matches(fresh)


def _load_freq(path) -> dict[str, int]:
    freq: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(f"{path}: line {lineno}: expected word<TAB>count")
            try:
                freq[cols[0]] = int(cols[1])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: bad count {cols[1]!r}") from None
    return freq


def _train_config(path, seed) -> tinylm.TrainConfig:
    overrides = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise DataError(f"{path}: config must be a JSON object")
    overrides.setdefault("seed", seed)
    try:
        return tinylm.TrainConfig(**overrides)
    except TypeError as exc:
        raise UsageError(f"bad training config: {exc}") from None


def _write_curve(path, curve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "train_loss", "val_loss"])
        for step, tr, val in curve:
            w.writerow([step, f"{tr:.6f}", f"{val:.6f}"])


# ── Commands ───────────────────────────────────────────────────────────────


def cmd_corpus_normalize(args) -> int:
    docs = corpus.read_documents(args.input)
    out_docs = []
    dropped = 0
    for doc in docs:
        text = corpus.normalize_text(doc.text)
        if not args.keep_all_scripts:
            text = corpus.filter_script(text)
        if text:
            out_docs.append(corpus.Document(doc.id, text, doc.source))
        else:
            dropped += 1
    corpus.write_documents(out_docs, args.output)
    _write_with_manifest(
        args.output,
        "corpus normalize",
        {"keep_all_scripts": args.keep_all_scripts},
        [args.input],
        args.seed,
    )
    log.info("normalized %d documents, dropped %d empty", len(out_docs), dropped)
    return 0


def cmd_corpus_dedup(args) -> int:
    docs = corpus.read_documents(args.input)
    survivors, stats = corpus.dedup_corpus(
        docs,
        threshold=args.threshold,
        num_perm=args.num_perm,
        bands=args.bands,
        rows=args.rows,
        seed=args.seed,
    )
    corpus.write_documents(survivors, args.output)
    _write_with_manifest(
        args.output,
        "corpus dedup",
        {
            "threshold": args.threshold,
            "num_perm": args.num_perm,
            "bands": args.bands,
            "rows": args.rows,
        },
        [args.input],
        args.seed,
    )
    log.info(
        "kept %d documents (%d words, %d bytes), dropped %d near-duplicates",
        stats.doc_count,
        stats.word_count,
        stats.byte_count,
        stats.dropped_dupes,
    )
    return 0


def cmd_train_bpe(args) -> int:
    docs = corpus.read_documents(args.input)
    counts = bpe.count_words(docs)
    voc, _ = bpe.train_bpe(counts, args.vocab_size)
    vocab.save_vocab(voc, args.output)
    _write_with_manifest(
        args.output, "train-bpe", {"vocab_size": args.vocab_size}, [args.input], args.seed
    )
    log.info("trained bpe vocabulary of %d pieces", voc.size)
    return 0


def cmd_train_unigram(args) -> int:
    docs = corpus.read_documents(args.input)
    counts = bpe.count_words(docs)
    voc = unigram.train_unigram(
        counts,
        args.vocab_size,
        seed_size=args.seed_size,
        max_piece_len=args.max_piece_len,
    )
    vocab.save_vocab(voc, args.output)
    _write_with_manifest(
        args.output,
        "train-unigram",
        {
            "vocab_size": args.vocab_size,
            "seed_size": args.seed_size,
            "max_piece_len": args.max_piece_len,
        },
        [args.input],
        args.seed,
    )
    log.info("trained unigram vocabulary of %d pieces", voc.size)
    return 0


def cmd_encode(args) -> int:
    voc = vocab.load_vocab(args.vocab)
    if (args.text is None) == (args.input is None):
        raise UsageError("encode needs exactly one of --text or --input")
    if args.text is not None:
        lines = [args.text]
    else:
        with open(args.input, "r", encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh]
    for line in lines:
        seq = vocab.encode(voc, line)
        if args.pieces:
            print(" ".join(voc.surface_of(t) for t in seq.ids))
        else:
            print(" ".join(str(t) for t in seq.ids))
    return 0


def cmd_decode(args) -> int:
    voc = vocab.load_vocab(args.vocab)
    if args.ids is not None:
        lines = [args.ids]
    else:
        lines = [line.rstrip("\n") for line in sys.stdin]
    for line in lines:
        if not line.strip():
            print()
            continue
        try:
            ids = [int(tok) for tok in line.split()]
        except ValueError:
            raise DataError(f"bad token id in {line!r}") from None
        print(vocab.decode(voc, ids))
    return 0


def cmd_eval_morpho(args) -> int:
    voc = vocab.load_vocab(args.vocab)
    records, skipped_lines = morpho.load_morph_dataset(args.dataset)
    if skipped_lines:
        log.info("skipped %d unreadable dataset lines", skipped_lines)
    freq = _load_freq(args.freq) if args.freq else None
    sample = corpus.read_documents(args.sample) if args.sample else None
    name = args.name or os.path.basename(args.vocab)
    report = morpho.evaluate_tokenizer(
        voc, records, word_freq=freq, corpus_sample=sample, name=name
    )
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    _write_with_manifest(
        args.report,
        "eval-morpho",
        {"name": name, "weighted": bool(freq)},
        [p for p in (args.vocab, args.dataset, args.freq, args.sample) if p],
        args.seed,
    )
    log.info(
        "%s: mean root integrity %.4f over %d words",
        name,
        report.mean_root_integrity,
        report.evaluated,
    )
    print(f"{name}\tmean_root_integrity={report.mean_root_integrity:.4f}"
          f"\ttokens_per_word={report.tokens_per_word_mean:.3f}")
    return 0


def _report_table(reports: list[morpho.TokenizerReport]) -> str:
    cols = [
        ("tokenizer", lambda r: r.tokenizer_name),
        ("vocab", lambda r: str(r.vocab_size)),
        ("root_integrity", lambda r: f"{r.mean_root_integrity:.4f}"),
        ("unmarked", lambda r: f"{r.mean_root_integrity_unmarked:.4f}"),
        ("tokens/word", lambda r: f"{r.tokens_per_word_mean:.3f}"),
        ("median", lambda r: f"{r.tokens_per_word_median:.1f}"),
        ("words", lambda r: str(r.evaluated)),
    ]
    widths = [
        max(len(title), max((len(get(r)) for r in reports), default=0))
        for title, get in cols
    ]
    lines = [
        "  ".join(title.ljust(w) for (title, _), w in zip(cols, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in reports:
        lines.append("  ".join(get(r).ljust(w) for (_, get), w in zip(cols, widths)))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    voc_a = vocab.load_vocab(args.vocab_a)
    voc_b = vocab.load_vocab(args.vocab_b)
    records, _ = morpho.load_morph_dataset(args.dataset)
    freq = _load_freq(args.freq) if args.freq else None
    sample = corpus.read_documents(args.sample) if args.sample else None
    rep_a = morpho.evaluate_tokenizer(
        voc_a, records, word_freq=freq, corpus_sample=sample,
        name=os.path.basename(args.vocab_a),
    )
    rep_b = morpho.evaluate_tokenizer(
        voc_b, records, word_freq=freq, corpus_sample=sample,
        name=os.path.basename(args.vocab_b),
    )
    print(_report_table([rep_a, rep_b]))
    if sample is not None:
        proj = morpho.efficiency_projection(rep_a, rep_b)
        print(
            f"\ntoken ratio {proj.token_ratio:.3f} -> projected speedup "
            f"{proj.speedup_percent:+.1f}%, memory ratio {proj.memory_ratio:.3f}"
            f" ({proj.note})"
        )
    for path, rep in ((args.report_a, rep_a), (args.report_b, rep_b)):
        if path:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(rep.to_json() + "\n")
    return 0


def cmd_remap(args) -> int:
    old_voc = vocab.load_vocab(args.old_vocab)
    new_voc = vocab.load_vocab(args.new_vocab)
    old_emb = remap.load_matrix(args.old_emb)
    if old_emb.vocab_size != old_voc.size:
        raise DataError(
            f"embedding rows ({old_emb.vocab_size}) do not match the old "
            f"vocabulary ({old_voc.size})"
        )
    plan, rep = remap.plan_remap(old_voc, new_voc)
    new_emb = remap.remap_embeddings(old_emb, plan)
    remap.save_matrix(new_emb, args.out_emb)
    inputs = [args.old_vocab, args.new_vocab, args.old_emb]
    if args.out_head:
        old_head = None
        if args.head_variant == "hm":
            if not args.old_head:
                raise UsageError("--head-variant hm needs --old-head")
            old_head = remap.load_matrix(args.old_head)
            inputs.append(args.old_head)
        new_head = remap.init_lm_head(new_emb, old_head, plan, args.head_variant)
        remap.save_matrix(new_head, args.out_head)
    _write_with_manifest(
        args.out_emb, "remap", {"head_variant": args.head_variant}, inputs, args.seed
    )
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(asdict(rep), fh, indent=2)
            fh.write("\n")
    log.info(
        "remapped %d tokens: %d exact, %d averaged, %d marker-adjusted, %d fallback",
        rep.total(),
        rep.exact_copy_count,
        rep.averaged_count,
        rep.marker_adjusted_count,
        rep.fallback_only_count,
    )
    return 0


def cmd_tinylm_train(args) -> int:
    voc = vocab.load_vocab(args.vocab)
    docs = corpus.read_documents(args.corpus)
    config = _train_config(args.config, args.seed)
    tokens = tinylm.tokenize_corpus(voc, docs)
    model = tinylm.new_model(voc.size, args.dim, args.context_k, seed=args.seed)
    result = tinylm.train(model, tokens, config)
    emb = remap.EmbeddingMatrix(result.model.embeddings.astype(np.float32), "embedding")
    head = remap.EmbeddingMatrix(result.model.head.astype(np.float32), "lm_head")
    remap.save_matrix(emb, args.out_prefix + ".emb")
    remap.save_matrix(head, args.out_prefix + ".head")
    np.savez(
        args.out_prefix + ".npz",
        embeddings=result.model.embeddings,
        body=result.model.body,
        head=result.model.head,
        context_k=np.int64(result.model.context_k),
    )
    if args.curve:
        _write_curve(args.curve, result.curve)
    _write_with_manifest(
        args.out_prefix + ".emb",
        "tinylm train",
        {"dim": args.dim, "context_k": args.context_k, "config": asdict(config)},
        [args.corpus, args.vocab],
        args.seed,
    )
    log.info(
        "trained %d steps, val loss %.4f -> %.4f",
        result.steps,
        result.initial_val_loss,
        result.final_val_loss,
    )
    print(f"val_loss_initial={result.initial_val_loss:.6f} "
          f"val_loss_final={result.final_val_loss:.6f} steps={result.steps}")
    return 0


def cmd_tinylm_compare(args) -> int:
    old_voc = vocab.load_vocab(args.old_vocab)
    new_voc = vocab.load_vocab(args.new_vocab)
    old_docs = corpus.read_documents(args.old_corpus)
    new_docs = corpus.read_documents(args.corpus)
    config = _train_config(args.config, args.seed)
    cmp, old_result = tinylm.run_init_comparison(
        old_docs,
        new_docs,
        old_voc,
        new_voc,
        dim=args.dim,
        context_k=args.context_k,
        config=config,
        head_variant=args.head_variant,
        seed=args.seed,
    )
    payload = {
        "old_val_loss": old_result.final_val_loss,
        "remapped_initial_val": cmp.remapped_initial_val,
        "remapped_final_val": cmp.remapped_final_val,
        "random_initial_val": cmp.random_initial_val,
        "random_final_val": cmp.random_final_val,
        "head_variant": cmp.head_variant,
        "seed": cmp.seed,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    _write_with_manifest(
        args.out,
        "tinylm compare-inits",
        {"dim": args.dim, "head_variant": args.head_variant, "config": asdict(config)},
        [args.old_corpus, args.corpus, args.old_vocab, args.new_vocab],
        args.seed,
    )
    print(
        f"remapped init val {cmp.remapped_initial_val:.4f} vs "
        f"random init val {cmp.random_initial_val:.4f}"
    )
    return 0


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        with open(path, "r", encoding="utf-8") as fh:
            reports.append(morpho.TokenizerReport.from_json(fh.read()))
    hashes = {r.dataset_hash for r in reports}
    if len(hashes) > 1:
        print("WARNING: reports were built from different datasets", file=sys.stderr)
    print(_report_table(reports))
    if len(reports) == 2:
        try:
            proj = morpho.efficiency_projection(reports[0], reports[1])
        except DataError:
            pass
        else:
            print(
                f"\ntoken ratio {proj.token_ratio:.3f} -> projected speedup "
                f"{proj.speedup_percent:+.1f}%, memory ratio {proj.memory_ratio:.3f}"
                f" ({proj.note})"
            )
    return 0


# ── Pipeline ───────────────────────────────────────────────────────────────

_PIPELINE_VARIANTS = ("raw", "bpe", "unigram", "unigram_hm")


def _pipeline_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad config JSON ({exc.msg})") from None
    for key in ("corpus", "old_corpus", "morph_dataset", "workdir"):
        if key not in cfg:
            raise UsageError(f"pipeline config missing {key!r}")
        if key != "workdir" and not os.path.exists(cfg[key]):
            raise UsageError(f"pipeline config: {key} path {cfg[key]!r} does not exist")
    cfg.setdefault("vocab_size", 2000)
    cfg.setdefault("old_vocab_size", 1000)
    cfg.setdefault("variants", list(_PIPELINE_VARIANTS))
    cfg.setdefault("dedup", {})
    cfg.setdefault("tinylm", {})
    bad = [v for v in cfg["variants"] if v not in _PIPELINE_VARIANTS]
    if bad:
        raise UsageError(f"unknown pipeline variants {bad}")
    return cfg


def cmd_pipeline(args) -> int:
    cfg = _pipeline_config(args.config)
    seed = args.seed
    work = cfg["workdir"]
    os.makedirs(work, exist_ok=True)

    def stage(out_path, command, params, inputs, run):
        if _stage_current(out_path, command, params, inputs, seed):
            log.info("skip %s (up to date)", command)
            return
        log.info("run %s", command)
        run()
        _write_with_manifest(out_path, command, params, inputs, seed)

    # 1. clean and dedup the target corpus
    clean_path = os.path.join(work, "corpus.clean.jsonl")
    dd = cfg["dedup"]
    dd_params = {
        "threshold": dd.get("threshold", corpus.DEFAULT_THRESHOLD),
        "num_perm": dd.get("num_perm", corpus.DEFAULT_NUM_PERM),
        "bands": dd.get("bands", corpus.DEFAULT_BANDS),
        "rows": dd.get("rows", corpus.DEFAULT_ROWS),
    }

    def run_clean():
        docs = corpus.read_documents(cfg["corpus"])
        cleaned = []
        for doc in docs:
            text = corpus.filter_script(corpus.normalize_text(doc.text))
            if text:
                cleaned.append(corpus.Document(doc.id, text, doc.source))
        survivors, stats = corpus.dedup_corpus(cleaned, seed=seed, **dd_params)
        corpus.write_documents(survivors, clean_path)
        log.info(
            "corpus: %d docs kept, %d dupes dropped", stats.doc_count, stats.dropped_dupes
        )

    stage(clean_path, "pipeline corpus", dd_params, [cfg["corpus"]], run_clean)

    # 2. the old tokenizer the model started with
    old_vocab_path = os.path.join(work, "old.vocab")

    def run_old_vocab():
        docs = corpus.read_documents(cfg["old_corpus"])
        counts = bpe.count_words(docs)
        voc, _ = bpe.train_bpe(counts, cfg["old_vocab_size"])
        vocab.save_vocab(voc, old_vocab_path)

    stage(
        old_vocab_path,
        "pipeline old-vocab",
        {"vocab_size": cfg["old_vocab_size"]},
        [cfg["old_corpus"]],
        run_old_vocab,
    )

    # 3. train the old model on the old corpus
    tl = dict(cfg["tinylm"])
    dim = tl.pop("dim", tinylm.DEFAULT_DIM)
    context_k = tl.pop("context_k", tinylm.DEFAULT_CONTEXT_K)
    tl.setdefault("seed", seed)
    try:
        config = tinylm.TrainConfig(**tl)
    except TypeError as exc:
        raise UsageError(f"bad tinylm config: {exc}") from None
    old_model_path = os.path.join(work, "old_model.npz")

    def run_old_model():
        voc = vocab.load_vocab(old_vocab_path)
        docs = corpus.read_documents(cfg["old_corpus"])
        tokens = tinylm.tokenize_corpus(voc, docs)
        model = tinylm.new_model(voc.size, dim, context_k, seed=seed)
        result = tinylm.train(model, tokens, config)
        np.savez(
            old_model_path,
            embeddings=result.model.embeddings,
            body=result.model.body,
            head=result.model.head,
            context_k=np.int64(context_k),
            val_loss=result.final_val_loss,
        )

    stage(
        old_model_path,
        "pipeline old-model",
        {"dim": dim, "context_k": context_k, "config": asdict(config)},
        [cfg["old_corpus"], old_vocab_path],
        run_old_model,
    )

    # 4. per-variant vocabularies, remap, adaptation, evaluation
    summary: dict[str, dict] = {}
    records, _ = morpho.load_morph_dataset(cfg["morph_dataset"])
    clean_docs = corpus.read_documents(clean_path)
    old_voc = vocab.load_vocab(old_vocab_path)
    old_blob = np.load(old_model_path)
    old_model = tinylm.FrozenBodyLM(
        old_blob["embeddings"], old_blob["body"], old_blob["head"], int(old_blob["context_k"])
    )
    sample_texts = [d.text for d in clean_docs[: min(len(clean_docs), 200)]]
    old_report = morpho.evaluate_tokenizer(
        old_voc, records, corpus_sample=sample_texts, name="old"
    )

    for variant in cfg["variants"]:
        head_variant = "hm" if variant == "unigram_hm" else "copy"
        if variant == "raw":
            new_voc = old_voc
        else:
            vocab_path = os.path.join(work, f"{variant}.vocab")
            family = "unigram" if variant.startswith("unigram") else "bpe"

            def run_vocab(vp=vocab_path, fam=family):
                counts = bpe.count_words(corpus.read_documents(clean_path))
                if fam == "bpe":
                    voc, _ = bpe.train_bpe(counts, cfg["vocab_size"])
                else:
                    voc = unigram.train_unigram(counts, cfg["vocab_size"])
                vocab.save_vocab(voc, vp)

            stage(
                vocab_path,
                f"pipeline vocab {family}",
                {"vocab_size": cfg["vocab_size"]},
                [clean_path],
                run_vocab,
            )
            new_voc = vocab.load_vocab(vocab_path)

        cmp = tinylm.compare_inits(
            old_model,
            old_voc,
            new_voc,
            clean_docs,
            config,
            head_variant=head_variant,
            seed=seed,
        )
        rep = morpho.evaluate_tokenizer(
            new_voc, records, corpus_sample=sample_texts, name=variant
        )
        entry = {
            "vocab_size": new_voc.size,
            "mean_root_integrity": rep.mean_root_integrity,
            "tokens_per_word": rep.tokens_per_word_mean,
            "remapped_initial_val": cmp.remapped_initial_val,
            "remapped_final_val": cmp.remapped_final_val,
            "random_initial_val": cmp.random_initial_val,
            "random_final_val": cmp.random_final_val,
        }
        if variant != "raw":
            proj = morpho.efficiency_projection(old_report, rep)
            entry["token_ratio"] = proj.token_ratio
            entry["projected_speedup_percent"] = proj.speedup_percent
        summary[variant] = entry
        log.info("variant %s done", variant)

    out_path = os.path.join(work, "pipeline_report.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(json.dumps(summary, indent=2))
    return 0


# ── Entry point ────────────────────────────────────────────────────────────


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")

    if args.command == "corpus":
        return (
            cmd_corpus_normalize(args)
            if args.subcommand == "normalize"
            else cmd_corpus_dedup(args)
        )
    if args.command == "train-bpe":
        return cmd_train_bpe(args)
    if args.command == "train-unigram":
        return cmd_train_unigram(args)
    if args.command == "encode":
        return cmd_encode(args)
    if args.command == "decode":
        return cmd_decode(args)
    if args.command == "eval-morpho":
        return cmd_eval_morpho(args)
    if args.command == "compare":
        return cmd_compare(args)
    if args.command == "remap":
        return cmd_remap(args)
    if args.command == "tinylm":
        return (
            cmd_tinylm_train(args)
            if args.subcommand == "train"
            else cmd_tinylm_compare(args)
        )
    if args.command == "pipeline":
        return cmd_pipeline(args)
    if args.command == "report":
        return cmd_report(args)
    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    try:
        code = run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        code = 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        code = 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        code = 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc}", file=sys.stderr)
        code = 3
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
