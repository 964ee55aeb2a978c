"""Tokenization, vocabulary, numericalization, two-corpus ingestion, batching.

Reserved ids are fixed: 0=PAD, 1=BOS, 2=EOS, 3=UNK. Every encoded sequence
ends with EOS and never exceeds max_len tokens. Splits are a deterministic
hash of the line index (0.8/0.1/0.1) unless explicit per-split files exist.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

DEFAULT_MAX_LEN = 20
DEFAULT_MIN_FREQUENCY = 2

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on word/punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    token_to_id: dict
    id_to_token: list
    min_frequency: int

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def to_dict(self) -> dict:
        return {"tokens": self.id_to_token[len(RESERVED):],
                "min_frequency": self.min_frequency}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        id_to_token = list(RESERVED) + list(d["tokens"])
        return cls({t: i for i, t in enumerate(id_to_token)}, id_to_token,
                   int(d["min_frequency"]))


def build_vocabulary(sentences: list[str], min_frequency: int = DEFAULT_MIN_FREQUENCY) -> Vocabulary:
    """Count tokens over all sentences; keep those with count >= min_frequency.

    Ordering is deterministic: descending count, ties broken lexicographically.
    """
    if not sentences:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for s in sentences:
        counts.update(tokenize(s))
    kept = sorted((t for t, c in counts.items() if c >= min_frequency),
                  key=lambda t: (-counts[t], t))
    id_to_token = list(RESERVED) + kept
    token_to_id = {t: i for i, t in enumerate(id_to_token)}
    return Vocabulary(token_to_id, id_to_token, min_frequency)


def encode(text: str, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> list[int]:
    """Token ids ending in EOS, truncated so the whole sequence fits max_len."""
    ids = [vocab.lookup(t) for t in tokenize(text)]
    return ids[: max_len - 1] + [EOS]


def decode(ids, vocab: Vocabulary) -> str:
    """Drop PAD/BOS/EOS, join remaining tokens with single spaces."""
    out = []
    for i in ids:
        i = int(i)
        if i >= vocab.size or i < 0:
            raise ValueError(f"token id {i} out of range for vocabulary of {vocab.size}")
        if i in (PAD, BOS, EOS):
            continue
        out.append(vocab.id_to_token[i])
    return " ".join(out)


def codec(sentence, direction: str, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN):
    if direction == "encode":
        return encode(sentence, vocab, max_len)
    if direction == "decode":
        return decode(sentence, vocab)
    raise ValueError(f"unknown codec direction '{direction}'")


SPLIT_NAMES = ("train", "valid", "test")


def split_of_line(index: int) -> str:
    """Deterministic 0.8/0.1/0.1 partition keyed by line index."""
    digest = hashlib.md5(str(index).encode("ascii")).hexdigest()
    bucket = int(digest, 16) % 10
    if bucket < 8:
        return "train"
    return "valid" if bucket == 8 else "test"


@dataclass
class CorpusPair:
    """Two token-indexed corpora sharing one vocabulary.

    sequences_* are aligned with texts_* by position; splits_* map a split
    name to the list of positions belonging to it.
    """

    vocab: Vocabulary
    max_len: int
    texts_a: list
    texts_b: list
    sequences_a: list
    sequences_b: list
    splits_a: dict = field(default_factory=dict)
    splits_b: dict = field(default_factory=dict)

    def split_sequences(self, side: str, split: str) -> list:
        seqs = self.sequences_a if side == "a" else self.sequences_b
        splits = self.splits_a if side == "a" else self.splits_b
        if split not in splits:
            raise KeyError(f"unknown split '{split}'")
        return [seqs[i] for i in splits[split]]

    def split_texts(self, side: str, split: str) -> list:
        texts = self.texts_a if side == "a" else self.texts_b
        splits = self.splits_a if side == "a" else self.splits_b
        if split not in splits:
            raise KeyError(f"unknown split '{split}'")
        return [texts[i] for i in splits[split]]


def build_corpus_pair(lines_a: list[str], lines_b: list[str],
                      min_frequency: int = DEFAULT_MIN_FREQUENCY,
                      max_len: int = DEFAULT_MAX_LEN,
                      vocab: Vocabulary | None = None,
                      splits: tuple | None = None) -> CorpusPair:
    """Assemble a CorpusPair from raw lines.

    The vocabulary is built from the two train splits only, so held-out tokens
    below the frequency bar become UNK rather than leaking into the model.
    Pass ``splits`` as (splits_a, splits_b) index dicts to override hashing.
    """
    if not lines_a or not lines_b:
        raise ValueError("both corpora must be non-empty")
    if splits is None:
        splits_a = {name: [] for name in SPLIT_NAMES}
        splits_b = {name: [] for name in SPLIT_NAMES}
        for i in range(len(lines_a)):
            splits_a[split_of_line(i)].append(i)
        for i in range(len(lines_b)):
            splits_b[split_of_line(i)].append(i)
    else:
        splits_a, splits_b = splits
    if vocab is None:
        train_lines = [lines_a[i] for i in splits_a["train"]] + \
                      [lines_b[i] for i in splits_b["train"]]
        vocab = build_vocabulary(train_lines, min_frequency)
    sequences_a = [encode(s, vocab, max_len) for s in lines_a]
    sequences_b = [encode(s, vocab, max_len) for s in lines_b]
    return CorpusPair(vocab, max_len, list(lines_a), list(lines_b),
                      sequences_a, sequences_b, splits_a, splits_b)


def _read_lines(path: Path) -> list[str]:
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def load_corpus_pair(prefix: str, min_frequency: int = DEFAULT_MIN_FREQUENCY,
                     max_len: int = DEFAULT_MAX_LEN,
                     vocab: Vocabulary | None = None) -> CorpusPair:
    """Load `<prefix>.a.txt` / `<prefix>.b.txt`.

    If `<prefix>.a.train.txt` exists, explicit `.train/.valid/.test` files are
    used for both sides instead of hash splitting.
    """
    prefix_path = Path(prefix)
    explicit = Path(f"{prefix}.a.train.txt")
    if explicit.exists():
        lines, splits = {}, {}
        for side in ("a", "b"):
            all_lines, side_splits, offset = [], {}, 0
            for split in SPLIT_NAMES:
                part = _read_lines(Path(f"{prefix}.{side}.{split}.txt"))
                side_splits[split] = list(range(offset, offset + len(part)))
                all_lines.extend(part)
                offset += len(part)
            lines[side] = all_lines
            splits[side] = side_splits
        return build_corpus_pair(lines["a"], lines["b"], min_frequency, max_len,
                                 vocab=vocab, splits=(splits["a"], splits["b"]))
    lines_a = _read_lines(prefix_path.with_name(prefix_path.name + ".a.txt"))
    lines_b = _read_lines(prefix_path.with_name(prefix_path.name + ".b.txt"))
    return build_corpus_pair(lines_a, lines_b, min_frequency, max_len, vocab=vocab)


@dataclass
class Batch:
    tokens: np.ndarray   # (batch, time) int64, PAD after each EOS
    lengths: np.ndarray  # (batch,) true lengths including EOS
    labels: np.ndarray   # (batch,) 0 for side a, 1 for side b
    side: str            # "a" | "b"


def pad_batch(sequences: list, side: str) -> Batch:
    if not sequences:
        raise ValueError("cannot build an empty batch")
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    width = int(lengths.max())
    tokens = np.full((len(sequences), width), PAD, dtype=np.int64)
    for r, seq in enumerate(sequences):
        tokens[r, : len(seq)] = seq
    label = 0 if side == "a" else 1
    labels = np.full(len(sequences), label, dtype=np.int64)
    return Batch(tokens, lengths, labels, side)


def make_batches(corpus: CorpusPair, split: str, batch_size: int, seed: int) -> list:
    """Seed-shuffled batches alternating a, b, a, b within one epoch.

    Each sentence of the split appears exactly once. When the two sides yield
    unequal batch counts, the surplus batches trail at the end.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng(seed)
    per_side = {}
    for side in ("a", "b"):
        seqs = corpus.split_sequences(side, split)
        order = rng.permutation(len(seqs))
        per_side[side] = [pad_batch([seqs[i] for i in order[j: j + batch_size]], side)
                          for j in range(0, len(seqs), batch_size)]
    batches = []
    a_list, b_list = per_side["a"], per_side["b"]
    for i in range(max(len(a_list), len(b_list))):
        if i < len(a_list):
            batches.append(a_list[i])
        if i < len(b_list):
            batches.append(b_list[i])
    return batches
