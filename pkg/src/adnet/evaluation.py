"""Evaluation suite: transfer strength, content preservation, the averaged
form-vector protocol, fluency perplexity, embedding export, and separation
probes.

Everything here treats the model as immutable. Scoring work is pure per
sentence, so the corpus-level helpers fan out over a thread pool; results are
assembled by index and never depend on the worker count. ADNET_THREADS caps
the pool size.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import silhouette_score
from sklearn.model_selection import StratifiedKFold, cross_val_score

from . import tensor as T
from .tensor import Tape, Tensor, backward
from .model import (
    AdnetModel,
    CriticParams,
    GruParams,
    LatentPair,
    _init_critic,
    _init_gru,
    _run_gru,
    _uniform,
    _zeros,
    critic_forward,
    critic_parameters,
    encode_batch,
    greedy_decode,
    merge_latents,
    read_param_archive,
    write_param_archive,
)
from .optim import make_optimizer, optimizer_step
from .text import BOS, EOS, PAD, UNK, CorpusPair, make_batches

RESERVED = (PAD, BOS, EOS)


def _thread_count() -> int:
    env = os.environ.get("ADNET_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _chunks(n: int, size: int) -> list:
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _parallel_map(fn, spans: list) -> list:
    workers = _thread_count()
    if workers == 1 or len(spans) == 1:
        return [fn(span) for span in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, spans))


def _pad_sequences(sequences: list) -> tuple:
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    width = max(1, int(lengths.max()) if len(lengths) else 1)
    tokens = np.full((len(sequences), width), PAD, dtype=np.int64)
    for i, seq in enumerate(sequences):
        tokens[i, :len(seq)] = seq
    return tokens, lengths


def _terminated(seq) -> list:
    seq = list(seq)
    if not seq or seq[-1] != EOS:
        seq.append(EOS)
    return seq


# ------------------------------------------------------------------ pooling

def pool_sentence_embedding(vectors) -> np.ndarray:
    """[elementwise max; elementwise min; elementwise mean], dim 3d."""
    rows = np.asarray(vectors, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("pooling requires at least one word vector")
    return np.concatenate([rows.max(axis=0), rows.min(axis=0), rows.mean(axis=0)])


def _content_rows(sequence, table: np.ndarray) -> np.ndarray:
    # markers dropped, out-of-table ids fall back to the UNK row
    ids = [int(i) if int(i) < table.shape[0] else UNK
           for i in sequence if int(i) not in RESERVED]
    return table[np.array(ids, dtype=np.int64)] if ids else np.zeros((0, table.shape[1]))


@dataclass
class ContentResult:
    score: float
    n_scored: int
    n_skipped: int


def content_preservation(source: list, transferred: list, embeddings) -> ContentResult:
    """Mean cosine between pooled word-embedding summaries of aligned pairs.

    Pairs whose pooled vector has zero norm (e.g. a sentence reduced to
    markers only) are skipped and counted rather than poisoning the mean.
    """
    if len(source) != len(transferred):
        raise ValueError(f"pair count mismatch: {len(source)} vs {len(transferred)}")
    table = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings)
    scores = []
    skipped = 0
    for s, t in zip(source, transferred):
        rows_s, rows_t = _content_rows(s, table), _content_rows(t, table)
        if rows_s.shape[0] == 0 or rows_t.shape[0] == 0:
            skipped += 1
            continue
        v_s, v_t = pool_sentence_embedding(rows_s), pool_sentence_embedding(rows_t)
        n_s, n_t = np.linalg.norm(v_s), np.linalg.norm(v_t)
        if n_s == 0.0 or n_t == 0.0:
            skipped += 1
            continue
        scores.append(float(np.dot(v_s, v_t) / (n_s * n_t)))
    mean = float(np.mean(scores)) if scores else 0.0
    return ContentResult(mean, len(scores), skipped)


# -------------------------------------------------------- form-swap decoding

def continuous_form_transfer(model: AdnetModel, sentence, opposite_pool: list,
                             k: int = 10, seed: int = 0) -> list:
    """Greedy generation from (m of the source, mean f of k sentences sampled
    seed-deterministically without replacement from the opposite corpus)."""
    if len(opposite_pool) < k:
        raise ValueError(f"pool of {len(opposite_pool)} is smaller than k={k}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(opposite_pool), size=k, replace=False)
    tokens, lengths = _pad_sequences([list(sentence)])
    m = encode_batch(model.encoder, tokens, lengths).m
    pool_tokens, pool_lengths = _pad_sequences([list(opposite_pool[i]) for i in picks])
    f_pool = encode_batch(model.encoder, pool_tokens, pool_lengths).f
    # averaged at 64-bit so a pool of identical sentences returns its f
    # vector bit-exactly
    f_avg = Tensor(f_pool.data.astype(np.float64).mean(axis=0, keepdims=True)
                   .astype(f_pool.dtype.type))
    return greedy_decode(model.generator, LatentPair(m, f_avg),
                         model.config.max_len)[0]


def _encode_f_matrix(model: AdnetModel, sequences: list, batch: int = 256) -> np.ndarray:
    outs = []
    for lo, hi in _chunks(len(sequences), batch):
        tokens, lengths = _pad_sequences(sequences[lo:hi])
        outs.append(encode_batch(model.encoder, tokens, lengths).f.data)
    return np.concatenate(outs, axis=0)


def transfer_corpus(model: AdnetModel, sequences: list, opposite_pool: list,
                    k: int = 10, seed: int = 0, chunk: int = 64) -> list:
    """continuous_form_transfer over a corpus; sentence i samples with its own
    stream (seed, i) so output is independent of chunking and thread count."""
    if len(opposite_pool) < k:
        raise ValueError(f"pool of {len(opposite_pool)} is smaller than k={k}")
    pool_f = _encode_f_matrix(model, opposite_pool)
    dtype = pool_f.dtype.type
    pool_f64 = pool_f.astype(np.float64)

    def run(span):
        lo, hi = span
        tokens, lengths = _pad_sequences(sequences[lo:hi])
        m = encode_batch(model.encoder, tokens, lengths).m
        f_rows = []
        for i in range(lo, hi):
            picks = np.random.default_rng([seed, i]).choice(
                len(opposite_pool), size=k, replace=False)
            f_rows.append(pool_f64[picks].mean(axis=0))
        f_avg = Tensor(np.stack(f_rows).astype(dtype))
        return greedy_decode(model.generator, LatentPair(m, f_avg),
                             model.config.max_len)

    parts = _parallel_map(run, _chunks(len(sequences), chunk))
    return [seq for part in parts for seq in part]


def reconstruct_corpus(model: AdnetModel, sequences: list, chunk: int = 64) -> list:
    """Greedy round trip through the model's own latents."""

    def run(span):
        lo, hi = span
        tokens, lengths = _pad_sequences(sequences[lo:hi])
        latent = encode_batch(model.encoder, tokens, lengths)
        return greedy_decode(model.generator, latent, model.config.max_len)

    parts = _parallel_map(run, _chunks(len(sequences), chunk))
    return [seq for part in parts for seq in part]


# ------------------------------------------------------ transfer classifier

@dataclass
class ClassifierConfig:
    embedding_dim: int = 32
    gru_hidden_dim: int = 64
    fc_dims: list = field(default_factory=lambda: [256, 128, 64, 32])
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0

    def to_dict(self) -> dict:
        return {"embedding_dim": self.embedding_dim,
                "gru_hidden_dim": self.gru_hidden_dim,
                "fc_dims": list(self.fc_dims), "epochs": self.epochs,
                "batch_size": self.batch_size, "lr": self.lr, "seed": self.seed}


@dataclass
class TransferClassifier:
    """Register classifier: GRU summary into an ELU FC stack with 2 logits.

    Trained only on raw corpus lines; model generations never touch it.
    """
    config: ClassifierConfig
    vocab_size: int
    embedding: Tensor
    gru: GruParams
    fc: CriticParams
    trained: bool = False
    val_accuracy: float = 0.0


def init_transfer_classifier(vocab_size: int, config: ClassifierConfig,
                             dtype=np.float32) -> TransferClassifier:
    rng = np.random.default_rng([config.seed, 0xC1])
    return TransferClassifier(
        config=config, vocab_size=vocab_size,
        embedding=_uniform(rng, (vocab_size, config.embedding_dim),
                           config.embedding_dim, dtype),
        gru=_init_gru(rng, config.embedding_dim, config.gru_hidden_dim, dtype),
        fc=_init_critic(rng, config.gru_hidden_dim, config.fc_dims, 2, dtype),
    )


def _classifier_params(clf: TransferClassifier) -> list:
    return [clf.embedding, clf.gru.w_ih, clf.gru.w_hh, clf.gru.b_ih,
            clf.gru.b_hh] + critic_parameters(clf.fc)


def _classifier_logits(clf: TransferClassifier, tokens: np.ndarray,
                       lengths: np.ndarray) -> Tensor:
    h = _run_gru(clf.gru, clf.embedding, tokens, lengths, clf.config.gru_hidden_dim)
    return critic_forward(clf.fc, h)


def classify(clf: TransferClassifier, sequences: list, chunk: int = 256) -> np.ndarray:
    """Predicted side index (0 = a, 1 = b) per sequence."""
    if not clf.trained:
        raise ValueError("classifier has not been trained")

    def run(span):
        lo, hi = span
        tokens, lengths = _pad_sequences(sequences[lo:hi])
        return np.argmax(_classifier_logits(clf, tokens, lengths).data, axis=1)

    parts = _parallel_map(run, _chunks(len(sequences), chunk))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


SIDE_INDEX = {"a": 0, "b": 1}


def _split_labeled(corpus: CorpusPair, split: str) -> tuple:
    seqs_a = corpus.split_sequences("a", split)
    seqs_b = corpus.split_sequences("b", split)
    sequences = seqs_a + seqs_b
    labels = np.array([0] * len(seqs_a) + [1] * len(seqs_b), dtype=np.int64)
    return sequences, labels


def train_transfer_classifier(corpus: CorpusPair,
                              config: ClassifierConfig | None = None) -> TransferClassifier:
    """Fit the register classifier on the train split; validation accuracy is
    recorded on the classifier for reporting next to any score it produces."""
    config = config or ClassifierConfig()
    clf = init_transfer_classifier(corpus.vocab.size, config)
    params = _classifier_params(clf)
    opt = make_optimizer(params, kind="adam", lr=config.lr)
    for epoch in range(config.epochs):
        batches = make_batches(corpus, "train", config.batch_size,
                               seed=config.seed * 1_000_003 + epoch)
        for batch in batches:
            labels = np.full(batch.tokens.shape[0], SIDE_INDEX[batch.side],
                             dtype=np.int64)
            with Tape() as tape:
                logits = _classifier_logits(clf, batch.tokens, batch.lengths)
                loss = T.mean(T.softmax_cross_entropy(logits, labels))
            optimizer_step(opt, params, backward(tape, loss))
    clf.trained = True
    val_sequences, val_labels = _split_labeled(corpus, "valid")
    if val_sequences:
        predicted = classify(clf, val_sequences)
        clf.val_accuracy = float(np.mean(predicted == val_labels))
    return clf


def transfer_strength(clf: TransferClassifier, sequences: list,
                      intended: np.ndarray) -> float:
    """Fraction of generations the classifier places in their intended
    register."""
    if not clf.trained:
        raise ValueError("classifier has not been trained")
    if len(sequences) != len(intended):
        raise ValueError("one intended label per sequence required")
    if not sequences:
        return 0.0
    return float(np.mean(classify(clf, sequences) == np.asarray(intended)))


def save_classifier(clf: TransferClassifier, out_dir) -> None:
    named = {"embedding": clf.embedding, "gru.w_ih": clf.gru.w_ih,
             "gru.w_hh": clf.gru.w_hh, "gru.b_ih": clf.gru.b_ih,
             "gru.b_hh": clf.gru.b_hh}
    for i, (w, b) in enumerate(clf.fc.layers):
        named[f"fc.{i}.w"], named[f"fc.{i}.b"] = w, b
    write_param_archive(out_dir, named, {
        "kind": "transfer_classifier", "vocab_size": clf.vocab_size,
        "trained": clf.trained, "val_accuracy": clf.val_accuracy,
        "config": clf.config.to_dict()})


def load_classifier(in_dir) -> TransferClassifier:
    config, arrays = read_param_archive(in_dir)
    if config.get("kind") != "transfer_classifier":
        raise ValueError(f"not a classifier checkpoint: {in_dir}")
    cc = ClassifierConfig(**config["config"])
    clf = init_transfer_classifier(config["vocab_size"], cc)
    named = {"embedding": clf.embedding, "gru.w_ih": clf.gru.w_ih,
             "gru.w_hh": clf.gru.w_hh, "gru.b_ih": clf.gru.b_ih,
             "gru.b_hh": clf.gru.b_hh}
    for i, (w, b) in enumerate(clf.fc.layers):
        named[f"fc.{i}.w"], named[f"fc.{i}.b"] = w, b
    for name, t in named.items():
        t.data = arrays[name].copy()
    clf.trained = bool(config["trained"])
    clf.val_accuracy = float(config["val_accuracy"])
    return clf


# ----------------------------------------------------------- language model

@dataclass
class LmConfig:
    embedding_dim: int = 32
    gru_hidden_dim: int = 64
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0

    def to_dict(self) -> dict:
        return {"embedding_dim": self.embedding_dim,
                "gru_hidden_dim": self.gru_hidden_dim, "epochs": self.epochs,
                "batch_size": self.batch_size, "lr": self.lr, "seed": self.seed}


@dataclass
class LanguageModel:
    """Decoder-shaped GRU language model with no latent conditioning: the
    hidden state starts at zero and consumes BOS then the sentence."""
    config: LmConfig
    vocab_size: int
    embedding: Tensor
    gru: GruParams
    w_out: Tensor
    b_out: Tensor
    trained: bool = False


def init_language_model(vocab_size: int, config: LmConfig,
                        dtype=np.float32) -> LanguageModel:
    rng = np.random.default_rng([config.seed, 0x17])
    hidden = config.gru_hidden_dim
    return LanguageModel(
        config=config, vocab_size=vocab_size,
        embedding=_uniform(rng, (vocab_size, config.embedding_dim),
                           config.embedding_dim, dtype),
        gru=_init_gru(rng, config.embedding_dim, hidden, dtype),
        w_out=_uniform(rng, (vocab_size, hidden), hidden, dtype),
        b_out=_zeros((vocab_size,), dtype),
    )


def _lm_params(lm: LanguageModel) -> list:
    return [lm.embedding, lm.gru.w_ih, lm.gru.w_hh, lm.gru.b_ih, lm.gru.b_hh,
            lm.w_out, lm.b_out]


def _lm_nll(lm: LanguageModel, tokens: np.ndarray, lengths: np.ndarray) -> tuple:
    """(summed masked NLL tensor, token count) teacher-forced from BOS."""
    from .model import gru_step
    batch, steps = tokens.shape
    dtype = lm.embedding.dtype
    h = Tensor(np.zeros((batch, lm.config.gru_hidden_dim), dtype=dtype))
    total = None
    for t in range(steps):
        inputs = np.full(batch, BOS, dtype=np.int64) if t == 0 else tokens[:, t - 1]
        x = T.embedding(lm.embedding, inputs)
        h = gru_step(lm.gru, x, h)
        logits = T.matmul(h, T.transpose(lm.w_out)) + lm.b_out
        nll = T.softmax_cross_entropy(logits, tokens[:, t])
        mask = (lengths > t).astype(dtype.type)
        term = T.tensor_sum(nll * Tensor(mask))
        total = term if total is None else total + term
    return total, int(lengths.sum())


def train_language_model(corpus: CorpusPair, config: LmConfig | None = None) -> LanguageModel:
    """Fit on both sides' train split together (one model of the domain)."""
    config = config or LmConfig()
    lm = init_language_model(corpus.vocab.size, config)
    params = _lm_params(lm)
    opt = make_optimizer(params, kind="adam", lr=config.lr)
    for epoch in range(config.epochs):
        batches = make_batches(corpus, "train", config.batch_size,
                               seed=config.seed * 1_000_003 + epoch)
        for batch in batches:
            with Tape() as tape:
                nll, count = _lm_nll(lm, batch.tokens, batch.lengths)
                loss = nll * (1.0 / count)
            optimizer_step(opt, params, backward(tape, loss))
    lm.trained = True
    return lm


def fluency_perplexity(lm: LanguageModel, sequences: list, chunk: int = 256) -> float:
    """exp(masked mean token NLL); sequences are EOS-terminated before
    scoring so truncated generations still pay for how they end."""
    if not lm.trained:
        raise ValueError("language model has not been trained")
    if not sequences:
        raise ValueError("no sequences to score")
    sequences = [_terminated(s) for s in sequences]

    def run(span):
        lo, hi = span
        tokens, lengths = _pad_sequences(sequences[lo:hi])
        nll, count = _lm_nll(lm, tokens, lengths)
        return float(nll.data), count

    parts = _parallel_map(run, _chunks(len(sequences), chunk))
    total = sum(p[0] for p in parts)
    count = sum(p[1] for p in parts)
    return float(np.exp(total / count))


def save_language_model(lm: LanguageModel, out_dir) -> None:
    named = {"embedding": lm.embedding, "gru.w_ih": lm.gru.w_ih,
             "gru.w_hh": lm.gru.w_hh, "gru.b_ih": lm.gru.b_ih,
             "gru.b_hh": lm.gru.b_hh, "w_out": lm.w_out, "b_out": lm.b_out}
    write_param_archive(out_dir, named, {
        "kind": "language_model", "vocab_size": lm.vocab_size,
        "trained": lm.trained, "config": lm.config.to_dict()})


def load_language_model(in_dir) -> LanguageModel:
    config, arrays = read_param_archive(in_dir)
    if config.get("kind") != "language_model":
        raise ValueError(f"not a language model checkpoint: {in_dir}")
    lm = init_language_model(config["vocab_size"], LmConfig(**config["config"]))
    for name, t in {"embedding": lm.embedding, "gru.w_ih": lm.gru.w_ih,
                    "gru.w_hh": lm.gru.w_hh, "gru.b_ih": lm.gru.b_ih,
                    "gru.b_hh": lm.gru.b_hh, "w_out": lm.w_out,
                    "b_out": lm.b_out}.items():
        t.data = arrays[name].copy()
    lm.trained = bool(config["trained"])
    return lm


# -------------------------------------------------------------- separation

@dataclass
class ProbeResult:
    accuracy: float
    silhouette: float
    degenerate: bool = False


def separation_probe(vectors, labels) -> ProbeResult:
    """5-fold cross-validated logistic-probe accuracy plus mean silhouette.

    Identical rows make silhouette undefined; that case reports 0 with the
    degenerate flag set instead of raising.
    """
    X = np.asarray(vectors, dtype=np.float64)
    y = np.asarray(labels)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError("separation probe needs at least two labels")
    folds = min(5, int(counts.min()))
    cv = StratifiedKFold(n_splits=max(2, folds), shuffle=True, random_state=0)
    probe = LogisticRegression(max_iter=1000)
    accuracy = float(cross_val_score(probe, X, y, cv=cv).mean())
    if np.all(X == X[0]):
        return ProbeResult(accuracy=accuracy, silhouette=0.0, degenerate=True)
    sil = float(silhouette_score(X, y))
    if not np.isfinite(sil):
        return ProbeResult(accuracy=accuracy, silhouette=0.0, degenerate=True)
    return ProbeResult(accuracy=accuracy, silhouette=sil, degenerate=False)


# ------------------------------------------------------------------ export

def _format_row(row: np.ndarray) -> str:
    return "\t".join(repr(float(x)) for x in row)


def export_embeddings(model: AdnetModel, corpus: CorpusPair, out_dir,
                      split: str = "test") -> dict:
    """meaning.tsv / form.tsv (one float row per sentence) and labels.tsv
    (side and raw text); a-side rows first, then b-side."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seqs_a = corpus.split_sequences("a", split)
    seqs_b = corpus.split_sequences("b", split)
    texts_a = corpus.split_texts("a", split)
    texts_b = corpus.split_texts("b", split)
    sequences = seqs_a + seqs_b
    sides = ["a"] * len(seqs_a) + ["b"] * len(seqs_b)
    texts = texts_a + texts_b
    m_rows, f_rows = [], []
    for lo, hi in _chunks(len(sequences), 256):
        tokens, lengths = _pad_sequences(sequences[lo:hi])
        latent = encode_batch(model.encoder, tokens, lengths)
        m_rows.append(latent.m.data)
        f_rows.append(latent.f.data)
    m_all = np.concatenate(m_rows) if m_rows else np.zeros((0, model.config.meaning_dim))
    f_all = np.concatenate(f_rows) if f_rows else np.zeros((0, model.config.form_dim))
    paths = {"meaning": out / "meaning.tsv", "form": out / "form.tsv",
             "labels": out / "labels.tsv"}
    paths["meaning"].write_text(
        "".join(_format_row(r) + "\n" for r in m_all), encoding="utf-8")
    paths["form"].write_text(
        "".join(_format_row(r) + "\n" for r in f_all), encoding="utf-8")
    paths["labels"].write_text(
        "".join(f"{side}\t{text}\n" for side, text in zip(sides, texts)),
        encoding="utf-8")
    return {k: str(v) for k, v in paths.items()}


def load_embedding_file(path) -> tuple:
    """External embedding text format: `token v1 ... vd` per line.
    Returns (token -> row index dict, float64 matrix)."""
    tokens, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            tokens.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if not rows:
        raise ValueError(f"no embedding rows in {path}")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("inconsistent embedding widths")
    return {tok: i for i, tok in enumerate(tokens)}, np.array(rows)


# ------------------------------------------------------------------ report

@dataclass
class EvalReport:
    transfer_strength: float
    content_preservation: float
    ppl_original: float
    ppl_transferred: float
    meaning_probe_acc: float
    form_probe_acc: float
    meaning_silhouette: float
    form_silhouette: float
    classifier_val_accuracy: float
    content_pairs_skipped: int
    config: dict

    def to_dict(self) -> dict:
        return {
            "transfer_strength": self.transfer_strength,
            "content_preservation": self.content_preservation,
            "ppl_original": self.ppl_original,
            "ppl_transferred": self.ppl_transferred,
            "meaning_probe_acc": self.meaning_probe_acc,
            "form_probe_acc": self.form_probe_acc,
            "meaning_silhouette": self.meaning_silhouette,
            "form_silhouette": self.form_silhouette,
            "classifier_val_accuracy": self.classifier_val_accuracy,
            "content_pairs_skipped": self.content_pairs_skipped,
            "config": self.config,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True)
                              + "\n", encoding="utf-8")

    def validate_ranges(self) -> None:
        checks = [0.0 <= self.transfer_strength <= 1.0,
                  -1.0 <= self.content_preservation <= 1.0,
                  self.ppl_original > 0.0, self.ppl_transferred > 0.0,
                  0.0 <= self.meaning_probe_acc <= 1.0,
                  0.0 <= self.form_probe_acc <= 1.0]
        if not all(checks):
            raise ValueError(f"report fields out of range: {self.to_dict()}")


@dataclass
class EvalConfig:
    k: int = 10
    seed: int = 0
    split: str = "test"
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    lm: LmConfig = field(default_factory=LmConfig)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "split": self.split,
                "classifier": self.classifier.to_dict(), "lm": self.lm.to_dict()}


def _encode_latents(model: AdnetModel, sequences: list) -> tuple:
    m_rows, f_rows = [], []
    for lo, hi in _chunks(len(sequences), 256):
        tokens, lengths = _pad_sequences(sequences[lo:hi])
        latent = encode_batch(model.encoder, tokens, lengths)
        m_rows.append(latent.m.data)
        f_rows.append(latent.f.data)
    return np.concatenate(m_rows), np.concatenate(f_rows)


def evaluate_model(model: AdnetModel, corpus: CorpusPair,
                   config: EvalConfig | None = None,
                   classifier: TransferClassifier | None = None,
                   lm: LanguageModel | None = None) -> EvalReport:
    """Full protocol on one checkpoint: swap f via the averaged-form protocol
    in both directions on the evaluation split, score transfer strength with
    an independently trained register classifier, content preservation with
    pooled embeddings, fluency with an independent language model, and
    meaning/form separation with linear probes."""
    config = config or EvalConfig()
    seqs_a = corpus.split_sequences("a", config.split)
    seqs_b = corpus.split_sequences("b", config.split)
    if not seqs_a or not seqs_b:
        raise ValueError(f"split '{config.split}' has an empty side")
    train_a = corpus.split_sequences("a", "train")
    train_b = corpus.split_sequences("b", "train")

    if classifier is None:
        classifier = train_transfer_classifier(corpus, config.classifier)
    if lm is None:
        lm = train_language_model(corpus, config.lm)

    gen_a = transfer_corpus(model, seqs_a, train_b, k=config.k, seed=config.seed)
    gen_b = transfer_corpus(model, seqs_b, train_a, k=config.k,
                            seed=config.seed + 1)
    generated = gen_a + gen_b
    intended = np.array([1] * len(gen_a) + [0] * len(gen_b), dtype=np.int64)

    strength = transfer_strength(classifier, generated, intended)
    content = content_preservation(seqs_a + seqs_b, generated,
                                   model.encoder.embedding)
    recon = reconstruct_corpus(model, seqs_a + seqs_b)
    ppl_original = fluency_perplexity(lm, recon)
    ppl_transferred = fluency_perplexity(lm, generated)

    sequences, labels = _split_labeled(corpus, config.split)
    m_all, f_all = _encode_latents(model, sequences)
    meaning_probe = separation_probe(m_all, labels)
    form_probe = separation_probe(f_all, labels)

    report = EvalReport(
        transfer_strength=strength,
        content_preservation=content.score,
        ppl_original=ppl_original,
        ppl_transferred=ppl_transferred,
        meaning_probe_acc=meaning_probe.accuracy,
        form_probe_acc=form_probe.accuracy,
        meaning_silhouette=meaning_probe.silhouette,
        form_silhouette=form_probe.silhouette,
        classifier_val_accuracy=classifier.val_accuracy,
        content_pairs_skipped=content.n_skipped,
        config=config.to_dict(),
    )
    report.validate_ranges()
    return report
