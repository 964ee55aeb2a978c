"""Networks: GRU encoder with meaning/form heads, GRU generator, critics.

All forward passes are pure functions of parameter Tensors and run on the
autodiff primitives, so one code path serves training (inside a Tape) and
evaluation (no tape). The generator shares the encoder's token embedding
table. Checkpoints are a manifest.json plus raw little-endian float32
weights.bin, validated by byte length on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .text import BOS, EOS, PAD

RESERVED_ID_COUNT = 4  # PAD, BOS, EOS, UNK


@dataclass
class ModelConfig:
    vocab_size: int
    embedding_dim: int = 64
    gru_hidden_dim: int = 128
    meaning_dim: int = 64
    form_dim: int = 64
    critic_hidden_dims: list = field(default_factory=lambda: [128, 64])
    max_len: int = 20

    def __post_init__(self):
        dims = [self.vocab_size, self.embedding_dim, self.gru_hidden_dim,
                self.meaning_dim, self.form_dim, self.max_len]
        if any(d < 1 for d in dims):
            raise ValueError("all model dimensions must be >= 1")

    def to_dict(self) -> dict:
        return {"vocab_size": self.vocab_size, "embedding_dim": self.embedding_dim,
                "gru_hidden_dim": self.gru_hidden_dim, "meaning_dim": self.meaning_dim,
                "form_dim": self.form_dim, "critic_hidden_dims": list(self.critic_hidden_dims),
                "max_len": self.max_len}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class GruParams:
    w_ih: Tensor  # (3H, In) reset/update/candidate blocks stacked
    w_hh: Tensor  # (3H, H)
    b_ih: Tensor  # (3H,)
    b_hh: Tensor  # (3H,)


@dataclass
class EncoderParams:
    embedding: Tensor  # (V, E)
    gru: GruParams
    w_m: Tensor  # (M, H)
    b_m: Tensor  # (M,)
    w_f: Tensor  # (F, H)
    b_f: Tensor  # (F,)


@dataclass
class GeneratorParams:
    w_z: Tensor  # (H, M + F)
    b_z: Tensor  # (H,)
    gru: GruParams
    w_out: Tensor  # (V, H)
    b_out: Tensor  # (V,)
    embedding: Tensor  # alias of the encoder table


@dataclass
class CriticParams:
    layers: list  # [(w, b), ...]; ELU between layers, last layer linear

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]


@dataclass
class LatentPair:
    m: Tensor  # (B, meaning_dim), components in (-1, 1)
    f: Tensor  # (B, form_dim)


@dataclass
class AdnetModel:
    config: ModelConfig
    encoder: EncoderParams
    generator: GeneratorParams
    critic_d: CriticParams
    critic_m: CriticParams
    critic_df: CriticParams | None = None


def _uniform(rng, shape, fan_in, dtype, scale: float = 1.0):
    bound = scale / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _init_gru(rng, in_dim, hidden, dtype):
    return GruParams(
        w_ih=_uniform(rng, (3 * hidden, in_dim), in_dim, dtype),
        w_hh=_uniform(rng, (3 * hidden, hidden), hidden, dtype),
        b_ih=_zeros((3 * hidden,), dtype),
        b_hh=_zeros((3 * hidden,), dtype),
    )


# Critics start two orders of magnitude below the encoder/generator init.
# A full-scale clipped critic stack scores in the hundreds at step 0, and
# that gradient saturates the tanh latents before reconstruction can anchor
# them; near-zero critics make early training a plain autoencoder, with
# adversarial pressure ramping in only as fast as the critics earn it.
CRITIC_INIT_SCALE = 0.01

# The merge layer starts nearly blind to f, so the decoder wires content
# through m while f's columns grow only as reconstruction demands; once the
# discriminator strips register from m, that demand is the register signal
# and nothing else. With symmetric init the decoder happily reads content
# from f, and form swaps then replace the content instead of the register.
FORM_MERGE_INIT_SCALE = 0.01


def _init_critic(rng, in_dim, hidden_dims, out_dim, dtype):
    dims = [in_dim] + list(hidden_dims) + [out_dim]
    layers = [(_uniform(rng, (dims[i + 1], dims[i]), dims[i], dtype,
                        scale=CRITIC_INIT_SCALE),
               _zeros((dims[i + 1],), dtype)) for i in range(len(dims) - 1)]
    return CriticParams(layers)


def init_model(config: ModelConfig, seed: int, dtype=np.float32,
               with_form_critic: bool = False) -> AdnetModel:
    rng = np.random.default_rng([seed, 0x0D])
    V, E, H = config.vocab_size, config.embedding_dim, config.gru_hidden_dim
    M, F = config.meaning_dim, config.form_dim
    embedding = _uniform(rng, (V, E), E, dtype)
    encoder = EncoderParams(
        embedding=embedding,
        gru=_init_gru(rng, E, H, dtype),
        w_m=_uniform(rng, (M, H), H, dtype), b_m=_zeros((M,), dtype),
        w_f=_uniform(rng, (F, H), H, dtype), b_f=_zeros((F,), dtype),
    )
    w_z = _uniform(rng, (H, M + F), M + F, dtype)
    w_z.data[:, M:] *= FORM_MERGE_INIT_SCALE
    generator = GeneratorParams(
        w_z=w_z, b_z=_zeros((H,), dtype),
        gru=_init_gru(rng, E, H, dtype),
        w_out=_uniform(rng, (V, H), H, dtype), b_out=_zeros((V,), dtype),
        embedding=embedding,
    )
    critic_d = _init_critic(rng, M, config.critic_hidden_dims, 1, dtype)
    critic_m = _init_critic(rng, F, config.critic_hidden_dims, 1, dtype)
    critic_df = _init_critic(rng, F, config.critic_hidden_dims, E, dtype) if with_form_critic else None
    return AdnetModel(config, encoder, generator, critic_d, critic_m, critic_df)


def _gru_named(prefix, g: GruParams):
    return [(f"{prefix}.w_ih", g.w_ih), (f"{prefix}.w_hh", g.w_hh),
            (f"{prefix}.b_ih", g.b_ih), (f"{prefix}.b_hh", g.b_hh)]


def _critic_named(prefix, c: CriticParams):
    out = []
    for i, (w, b) in enumerate(c.layers):
        out += [(f"{prefix}.{i}.w", w), (f"{prefix}.{i}.b", b)]
    return out


def named_parameters(model: AdnetModel) -> dict:
    """Ordered name -> Tensor map; the shared embedding appears once."""
    pairs = [("encoder.embedding", model.encoder.embedding)]
    pairs += _gru_named("encoder.gru", model.encoder.gru)
    pairs += [("encoder.w_m", model.encoder.w_m), ("encoder.b_m", model.encoder.b_m),
              ("encoder.w_f", model.encoder.w_f), ("encoder.b_f", model.encoder.b_f)]
    pairs += [("generator.w_z", model.generator.w_z), ("generator.b_z", model.generator.b_z)]
    pairs += _gru_named("generator.gru", model.generator.gru)
    pairs += [("generator.w_out", model.generator.w_out), ("generator.b_out", model.generator.b_out)]
    pairs += _critic_named("critic_d", model.critic_d)
    pairs += _critic_named("critic_m", model.critic_m)
    if model.critic_df is not None:
        pairs += _critic_named("critic_df", model.critic_df)
    return dict(pairs)


def encoder_generator_parameters(model: AdnetModel) -> list:
    named = named_parameters(model)
    return [t for name, t in named.items()
            if name.startswith("encoder.") or name.startswith("generator.")]


def critic_parameters(critic: CriticParams) -> list:
    return [t for pair in critic.layers for t in pair]


# ------------------------------------------------------------------ forward

def gru_step(params: GruParams, x: Tensor, h: Tensor) -> Tensor:
    """One timestep: x (B, In), h (B, H) -> new h (B, H)."""
    hidden = h.shape[1]
    gx = T.matmul(x, T.transpose(params.w_ih)) + params.b_ih
    gh = T.matmul(h, T.transpose(params.w_hh)) + params.b_hh
    r = T.sigmoid(T.slice_cols(gx, 0, hidden) + T.slice_cols(gh, 0, hidden))
    u = T.sigmoid(T.slice_cols(gx, hidden, 2 * hidden) + T.slice_cols(gh, hidden, 2 * hidden))
    n = T.tanh(T.slice_cols(gx, 2 * hidden, 3 * hidden)
               + r * T.slice_cols(gh, 2 * hidden, 3 * hidden))
    return (1.0 - u) * n + u * h


def _run_gru(params: GruParams, embedding: Tensor, tokens: np.ndarray,
             lengths: np.ndarray, hidden: int, h0: Tensor | None = None) -> Tensor:
    """Final GRU state per row; state updates freeze once a row's length is
    exhausted so padding never perturbs the summary."""
    batch, steps = tokens.shape
    dtype = embedding.dtype
    h = h0 if h0 is not None else Tensor(np.zeros((batch, hidden), dtype=dtype))
    for t in range(steps):
        x = T.embedding(embedding, tokens[:, t])
        h_new = gru_step(params, x, h)
        if np.all(lengths > t):
            h = h_new
        else:
            mask = Tensor((lengths > t).astype(dtype).reshape(batch, 1))
            h = mask * h_new + (1.0 - mask) * h
    return h


def encode_batch(params: EncoderParams, tokens: np.ndarray, lengths: np.ndarray) -> LatentPair:
    """m = tanh(W_m h + b_m), f = tanh(W_f h + b_f) from the final GRU state."""
    if tokens.size == 0:
        raise ValueError("cannot encode an empty batch")
    hidden = params.gru.w_hh.shape[1]
    h = _run_gru(params.gru, params.embedding, tokens, lengths, hidden)
    m = T.tanh(T.matmul(h, T.transpose(params.w_m)) + params.b_m)
    f = T.tanh(T.matmul(h, T.transpose(params.w_f)) + params.b_f)
    return LatentPair(m, f)


def encode(params: EncoderParams, sentence) -> LatentPair:
    """Single-sentence convenience wrapper around encode_batch."""
    ids = np.asarray(sentence, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("cannot encode an empty sentence")
    return encode_batch(params, ids.reshape(1, -1), np.array([ids.size]))


def merge_latents(params: GeneratorParams, latent: LatentPair) -> Tensor:
    """z = tanh(W_z [m; f] + b_z): the decoder's initial hidden state."""
    mf = T.concat([latent.m, latent.f], axis=1)
    if mf.shape[1] != params.w_z.shape[1]:
        raise T.ShapeError(f"latent dim {mf.shape[1]} does not match "
                           f"merge layer {params.w_z.shape}")
    return T.tanh(T.matmul(mf, T.transpose(params.w_z)) + params.b_z)


def decode_nll(params: GeneratorParams, latent: LatentPair, tokens: np.ndarray,
               lengths: np.ndarray) -> tuple:
    """Teacher-forced negative log-likelihood.

    Returns (summed NLL Tensor over all unpadded target positions, count).
    Inputs are BOS followed by the target shifted right; targets include EOS.
    """
    batch, steps = tokens.shape
    dtype = params.w_out.dtype
    h = merge_latents(params, latent)
    total = None
    for t in range(steps):
        inputs = np.full(batch, BOS, dtype=np.int64) if t == 0 else tokens[:, t - 1]
        x = T.embedding(params.embedding, inputs)
        h = gru_step(params.gru, x, h)
        logits = T.matmul(h, T.transpose(params.w_out)) + params.b_out
        ce = T.softmax_cross_entropy(logits, tokens[:, t])  # (B,)
        mask = (lengths > t).astype(dtype)
        step_sum = T.tensor_sum(ce if np.all(mask == 1.0) else ce * Tensor(mask))
        total = step_sum if total is None else total + step_sum
    return total, int(lengths.sum())


def greedy_decode(params: GeneratorParams, latent: LatentPair, max_len: int) -> list:
    """Argmax decoding (ties to the lowest id), stopping at EOS or max_len.

    Returns one id list per batch row, EOS included when emitted.
    """
    batch = latent.m.shape[0]
    h = merge_latents(params, latent)
    inputs = np.full(batch, BOS, dtype=np.int64)
    done = np.zeros(batch, dtype=bool)
    sequences = [[] for _ in range(batch)]
    for _ in range(max_len):
        x = T.embedding(params.embedding, inputs)
        h = gru_step(params.gru, x, h)
        logits = (T.matmul(h, T.transpose(params.w_out)) + params.b_out).data
        nxt = np.argmax(logits, axis=1)
        for r in range(batch):
            if not done[r]:
                sequences[r].append(int(nxt[r]))
                if nxt[r] == EOS:
                    done[r] = True
        if done.all():
            break
        inputs = nxt
    return sequences


def generate(params: GeneratorParams, latent: LatentPair, mode: str = "greedy",
             target: np.ndarray | None = None, max_len: int = 20) -> tuple:
    """(token sequences, per-step vocabulary log-probabilities).

    greedy: feeds back its own argmax; teacher_forced: consumes ``target``
    (B, T) and scores it.
    """
    if mode == "greedy":
        sequences = greedy_decode(params, latent, max_len)
        logprobs = _score_steps(params, latent, _pad_sequences(sequences))
        return sequences, logprobs
    if mode == "teacher_forced":
        if target is None:
            raise ValueError("teacher_forced mode requires a target")
        target = np.asarray(target, dtype=np.int64)
        if target.ndim == 1:
            target = target.reshape(1, -1)
        return [list(map(int, row)) for row in target], _score_steps(params, latent, target)
    raise ValueError(f"unknown generation mode '{mode}'")


def _pad_sequences(sequences: list) -> np.ndarray:
    width = max((len(s) for s in sequences), default=1)
    out = np.full((len(sequences), max(width, 1)), PAD, dtype=np.int64)
    for r, s in enumerate(sequences):
        out[r, : len(s)] = s
    return out


def _score_steps(params: GeneratorParams, latent: LatentPair, tokens: np.ndarray) -> list:
    batch, steps = tokens.shape
    h = merge_latents(params, latent)
    logprobs = []
    for t in range(steps):
        inputs = np.full(batch, BOS, dtype=np.int64) if t == 0 else tokens[:, t - 1]
        x = T.embedding(params.embedding, inputs)
        h = gru_step(params.gru, x, h)
        logits = T.matmul(h, T.transpose(params.w_out)) + params.b_out
        logprobs.append(T.log_softmax(logits))
    return logprobs


def critic_forward(params: CriticParams, x: Tensor) -> Tensor:
    """(B, in) -> (B, out); ELU between layers, unbounded linear output."""
    if x.shape[1] != params.input_dim:
        raise T.ShapeError(f"critic expects input dim {params.input_dim}, got {x.shape}")
    h = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        h = T.matmul(h, T.transpose(w)) + b
        if i != last:
            h = T.elu(h)
    return h


def critic_score(params: CriticParams, v: Tensor) -> Tensor:
    """Scalar score of one vector (or a vector output for multi-dim critics)."""
    out = critic_forward(params, T.reshape(v, (1, v.shape[-1])))
    if params.output_dim == 1:
        return T.reshape(out, ())
    return T.reshape(out, (params.output_dim,))


# -------------------------------------------------- form-dimension analysis

def _content_token_ids(sequences) -> np.ndarray:
    return np.array([i for seq in sequences for i in seq
                     if i not in (PAD, BOS, EOS)], dtype=np.int64)


def find_form_dimensions(corpus, embeddings: Tensor, n_dims: int = 1) -> list:
    """Embedding dimensions whose corpus-mean difference is largest.

    Means are taken over every token of each side (reserved padding markers
    excluded); indices come back sorted by descending |difference|.
    """
    emb = embeddings.data
    if not (1 <= n_dims <= emb.shape[1]):
        raise ValueError(f"n_dims must lie in [1, {emb.shape[1]}]")
    ids_a = _content_token_ids(corpus.sequences_a)
    ids_b = _content_token_ids(corpus.sequences_b)
    if ids_a.size == 0 or ids_b.size == 0:
        raise ValueError("cannot analyze an empty corpus")
    diff = np.abs(emb[ids_a].mean(axis=0) - emb[ids_b].mean(axis=0))
    order = np.argsort(-diff, kind="stable")
    return [int(i) for i in order[:n_dims]]


def form_target_u(sentence, embeddings: Tensor, form_dims: list, k_discard: int = 2) -> np.ndarray:
    """Mean token embedding after dropping the k most extreme tokens at each
    end of the summed form-dimension score; degenerate sentences fall back to
    the plain mean."""
    ids = np.array([i for i in sentence if i not in (PAD, BOS, EOS)], dtype=np.int64)
    if ids.size == 0:
        raise ValueError("cannot build a form target for an empty sentence")
    emb = embeddings.data[ids]
    if k_discard > 0 and ids.size > 2 * k_discard:
        scores = emb[:, list(form_dims)].sum(axis=1)
        order = np.argsort(scores, kind="stable")
        emb = emb[order[k_discard: ids.size - k_discard]]
    return emb.mean(axis=0)


# ------------------------------------------------------------- checkpoints

def write_param_archive(out_dir, named: dict, config: dict) -> None:
    """manifest.json + weights.bin (little-endian float32, manifest order)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": config,
                "params": [{"name": name, "shape": list(t.shape), "dtype": "float32"}
                           for name, t in named.items()]}
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(out / "weights.bin", "wb") as fh:
        for t in named.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def read_param_archive(in_dir) -> tuple:
    """-> (config dict, {name: float32 array}); validates total byte length."""
    src = Path(in_dir)
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {src}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    blob = (src / "weights.bin").read_bytes()
    expected = sum(int(np.prod(p["shape"])) for p in manifest["params"]) * 4
    if len(blob) != expected:
        raise ValueError(f"weights.bin holds {len(blob)} bytes, manifest expects {expected}")
    params, offset = {}, 0
    for p in manifest["params"]:
        count = int(np.prod(p["shape"]))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        params[p["name"]] = arr.reshape([int(s) for s in p["shape"]]).astype(np.float32)
        offset += count * 4
    return manifest["config"], params


def save_checkpoint(model: AdnetModel, out_dir) -> None:
    config = dict(model.config.to_dict())
    config["with_form_critic"] = model.critic_df is not None
    write_param_archive(out_dir, named_parameters(model), config)


def load_checkpoint(in_dir) -> AdnetModel:
    config_dict, arrays = read_param_archive(in_dir)
    with_df = bool(config_dict.pop("with_form_critic", False))
    config = ModelConfig.from_dict(config_dict)
    model = init_model(config, seed=0, with_form_critic=with_df)
    named = named_parameters(model)
    if set(named) != set(arrays):
        missing = set(named) ^ set(arrays)
        raise ValueError(f"checkpoint parameter mismatch: {sorted(missing)}")
    for name, t in named.items():
        if tuple(arrays[name].shape) != t.shape:
            raise ValueError(f"shape mismatch for {name}")
        t.data = arrays[name].copy()
    return model
