"""Losses and the two-stage adversarial-motivational training procedure.

Each training step consumes one batch from each corpus and runs two stages in
strict 1:1 alternation: first the critics (D on meaning vectors, M on form
vectors, optionally D_f on form vectors) update against detached latents and
are weight-clipped; then the encoder and generator update against the full
objective

    L_total = L_rec - lambda_adv * L_D + lambda_motiv * L_M - lambda_f * L_Df

with critic parameters untouched. The encoder is trained to fool D (erase
register evidence from m), help M (keep register evidence in f), and starve
D_f (keep content out of f).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tape, Tensor, backward
from .model import (
    AdnetModel,
    ModelConfig,
    critic_forward,
    critic_parameters,
    decode_nll,
    encode_batch,
    encoder_generator_parameters,
    find_form_dimensions,
    form_target_u,
    init_model,
    named_parameters,
    read_param_archive,
    save_checkpoint,
    write_param_archive,
)
from .optim import clip_weights, make_optimizer, optimizer_step
from .text import Batch, CorpusPair, make_batches


@dataclass
class LossWeights:
    lambda_adv: float = 1.0
    lambda_motiv: float = 1.0
    lambda_f: float = 0.0  # 0 disables the form discriminator

    def __post_init__(self):
        if min(self.lambda_adv, self.lambda_motiv, self.lambda_f) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class OptimSettings:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    optim: OptimSettings = field(default_factory=OptimSettings)
    # per-group overrides, keyed "eg" | "d" | "m" | "df"; groups without an
    # entry fall back to `optim`
    optim_by_group: dict = field(default_factory=dict)
    clip_c: float = 0.1
    checkpoint_every: int = 0  # steps; 0 = final checkpoint only
    out_dir: str | None = None
    model: ModelConfig | None = None  # derived from the corpus when absent
    form_n_dims: int = 1
    form_k_discard: int = 2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        unknown = set(self.optim_by_group) - {"eg", "d", "m", "df"}
        if unknown:
            raise ValueError(f"unknown optimizer groups: {sorted(unknown)}")

    def group_optim(self, group: str) -> OptimSettings:
        return self.optim_by_group.get(group, self.optim)


@dataclass
class TrainState:
    model: AdnetModel
    config: TrainConfig
    optimizers: dict  # group name -> OptimizerState
    epoch: int = 0
    step: int = 0
    form_dims: list | None = None
    last_losses: dict | None = None


def _epoch_seed(seed: int, epoch: int) -> int:
    return seed * 1_000_003 + epoch


# ------------------------------------------------------------------ losses

def _mean_nll(model: AdnetModel, batch: Batch) -> Tensor:
    if batch.tokens.size == 0:
        raise ValueError("empty batch")
    latent = encode_batch(model.encoder, batch.tokens, batch.lengths)
    nll, count = decode_nll(model.generator, latent, batch.tokens, batch.lengths)
    return nll * (1.0 / count)


def loss_reconstruction(model: AdnetModel, batch_a: Batch, batch_b: Batch) -> Tensor:
    """Masked mean token NLL of teacher-forced reconstruction, one term per
    corpus, summed."""
    return _mean_nll(model, batch_a) + _mean_nll(model, batch_b)


def critic_loss_from_latents(critic, v_a: Tensor, v_b: Tensor) -> Tensor:
    """mean(score on a) - mean(score on b); negative once sides separate."""
    return T.mean(critic_forward(critic, v_a)) - T.mean(critic_forward(critic, v_b))


def loss_critic(model: AdnetModel, batch_a: Batch, batch_b: Batch, which: str) -> Tensor:
    if batch_a.tokens.size == 0 or batch_b.tokens.size == 0:
        raise ValueError("empty batch")
    lat_a = encode_batch(model.encoder, batch_a.tokens, batch_a.lengths)
    lat_b = encode_batch(model.encoder, batch_b.tokens, batch_b.lengths)
    if which == "d":
        return critic_loss_from_latents(model.critic_d, lat_a.m, lat_b.m)
    if which == "m":
        return critic_loss_from_latents(model.critic_m, lat_a.f, lat_b.f)
    raise ValueError(f"unknown critic '{which}'")


def form_targets(model: AdnetModel, batch: Batch, form_dims, k_discard: int) -> np.ndarray:
    rows = [form_target_u(seq[:length], model.encoder.embedding, form_dims, k_discard)
            for seq, length in zip(batch.tokens, batch.lengths)]
    return np.stack(rows).astype(model.encoder.embedding.dtype.type)


def form_discriminator_loss_from_latent(critic, f: Tensor, targets: np.ndarray) -> Tensor:
    pred = critic_forward(critic, f)
    diff = pred - Tensor(targets, dtype=pred.dtype)
    return T.mean(T.tensor_sum(diff * diff, axis=1))


def loss_form_discriminator(model: AdnetModel, batch: Batch,
                            form_dims=None, k_discard: int = 2) -> Tensor:
    """Mean squared distance between D_f(f_i) and each sentence's content
    summary u_i. form_dims defaults to a fresh single-dimension analysis of
    the batch itself only when unset by the caller."""
    if model.critic_df is None:
        raise ValueError("form discriminator is disabled (lambda_f = 0)")
    if form_dims is None:
        raise ValueError("form_dims required: pass the per-epoch analysis result")
    latent = encode_batch(model.encoder, batch.tokens, batch.lengths)
    targets = form_targets(model, batch, form_dims, k_discard)
    return form_discriminator_loss_from_latent(model.critic_df, latent.f, targets)


# ------------------------------------------------------------------ stages

def make_train_state(corpus: CorpusPair, config: TrainConfig) -> TrainState:
    model_config = config.model or ModelConfig(vocab_size=corpus.vocab.size,
                                               max_len=corpus.max_len)
    with_df = config.weights.lambda_f > 0
    model = init_model(model_config, seed=config.seed, with_form_critic=with_df)

    def opt_for(group, params):
        o = config.group_optim(group)
        return make_optimizer(params, kind=o.kind, lr=o.lr, beta1=o.beta1,
                              beta2=o.beta2, eps=o.eps)

    optimizers = {
        "eg": opt_for("eg", encoder_generator_parameters(model)),
        "d": opt_for("d", critic_parameters(model.critic_d)),
        "m": opt_for("m", critic_parameters(model.critic_m)),
    }
    if with_df:
        optimizers["df"] = opt_for("df", critic_parameters(model.critic_df))
    return TrainState(model=model, config=config, optimizers=optimizers)


def train_step_critics(state: TrainState, batch_a: Batch, batch_b: Batch) -> TrainState:
    """Critic stage: update theta_D, theta_M (and theta_Df) against detached
    latents; encoder and generator are untouched; D and M are clipped."""
    model = state.model
    lat_a = encode_batch(model.encoder, batch_a.tokens, batch_a.lengths)
    lat_b = encode_batch(model.encoder, batch_b.tokens, batch_b.lengths)
    m_a, f_a = lat_a.m.detach(), lat_a.f.detach()
    m_b, f_b = lat_b.m.detach(), lat_b.f.detach()

    for critic, group, va, vb in ((model.critic_d, "d", m_a, m_b),
                                  (model.critic_m, "m", f_a, f_b)):
        params = critic_parameters(critic)
        with Tape() as tape:
            loss = critic_loss_from_latents(critic, va, vb)
        optimizer_step(state.optimizers[group], params, backward(tape, loss))
        clip_weights(params, state.config.clip_c)

    if model.critic_df is not None:
        params = critic_parameters(model.critic_df)
        ta = form_targets(model, batch_a, state.form_dims, state.config.form_k_discard)
        tb = form_targets(model, batch_b, state.form_dims, state.config.form_k_discard)
        with Tape() as tape:
            loss = 0.5 * (form_discriminator_loss_from_latent(model.critic_df, f_a, ta)
                          + form_discriminator_loss_from_latent(model.critic_df, f_b, tb))
        optimizer_step(state.optimizers["df"], params, backward(tape, loss))
    return state


def train_step_encoder_generator(state: TrainState, batch_a: Batch, batch_b: Batch) -> TrainState:
    """Encoder/generator stage: minimize the full objective over theta_E and
    theta_G only. Returns the state; loss components land in state via the
    caller. Zero-weighted terms are skipped outright, so the lambda = 0 case
    is a pure autoencoder step."""
    model = state.model
    w = state.config.weights
    params = encoder_generator_parameters(model)
    with Tape() as tape:
        lat_a = encode_batch(model.encoder, batch_a.tokens, batch_a.lengths)
        lat_b = encode_batch(model.encoder, batch_b.tokens, batch_b.lengths)
        nll_a, count_a = decode_nll(model.generator, lat_a, batch_a.tokens, batch_a.lengths)
        nll_b, count_b = decode_nll(model.generator, lat_b, batch_b.tokens, batch_b.lengths)
        l_rec = nll_a * (1.0 / count_a) + nll_b * (1.0 / count_b)
        total = l_rec
        l_d = l_m = 0.0
        if w.lambda_adv > 0:
            l_d_t = critic_loss_from_latents(model.critic_d, lat_a.m, lat_b.m)
            total = total + (-w.lambda_adv) * l_d_t
            l_d = float(l_d_t.data)
        if w.lambda_motiv > 0:
            l_m_t = critic_loss_from_latents(model.critic_m, lat_a.f, lat_b.f)
            total = total + w.lambda_motiv * l_m_t
            l_m = float(l_m_t.data)
        if w.lambda_f > 0 and model.critic_df is not None:
            ta = form_targets(model, batch_a, state.form_dims, state.config.form_k_discard)
            tb = form_targets(model, batch_b, state.form_dims, state.config.form_k_discard)
            l_df_t = 0.5 * (form_discriminator_loss_from_latent(model.critic_df, lat_a.f, ta)
                            + form_discriminator_loss_from_latent(model.critic_df, lat_b.f, tb))
            total = total + (-w.lambda_f) * l_df_t
    grads = backward(tape, total)
    optimizer_step(state.optimizers["eg"], params, grads)
    state.last_losses = {"l_rec": float(l_rec.data), "l_d": l_d, "l_m": l_m,
                         "l_total": float(total.data)}
    return state


def _rec_only_step(state: TrainState, batch: Batch) -> dict:
    """Leftover batch when corpus sides are unequal: reconstruction only."""
    model = state.model
    params = encoder_generator_parameters(model)
    with Tape() as tape:
        l_rec = _mean_nll(model, batch)
    optimizer_step(state.optimizers["eg"], params, backward(tape, l_rec))
    val = float(l_rec.data)
    return {"l_rec": val, "l_d": 0.0, "l_m": 0.0, "l_total": val}


METRICS_HEADER = "step,epoch,l_rec,l_d,l_m,l_total"


@dataclass
class TrainResult:
    state: TrainState
    metrics: list
    metrics_path: str | None
    checkpoint_paths: list


def _write_metrics(path: Path, rows: list) -> None:
    lines = [METRICS_HEADER]
    for r in rows:
        lines.append(f"{r['step']},{r['epoch']},{r['l_rec']!r},{r['l_d']!r},"
                     f"{r['l_m']!r},{r['l_total']!r}")
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def train(corpus: CorpusPair, config: TrainConfig,
          state: TrainState | None = None) -> TrainResult:
    """Run the strict 1:1 two-stage alternation over the train split.

    Deterministic for a fixed seed: batch order is derived per epoch from the
    seed, and every update is pure arithmetic.
    """
    if state is None:
        state = make_train_state(corpus, config)
    state.config = config
    model = state.model
    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    metrics: list = []
    checkpoints: list = []

    def maybe_checkpoint(force: bool = False):
        if out_dir is None:
            return
        due = config.checkpoint_every and state.step % config.checkpoint_every == 0
        if force or due:
            path = out_dir / f"ckpt-{state.step}"
            save_checkpoint(model, path)
            checkpoints.append(str(path))

    for _ in range(config.epochs):
        if config.weights.lambda_f > 0:
            state.form_dims = find_form_dimensions(corpus, model.encoder.embedding,
                                                   config.form_n_dims)
        batches = make_batches(corpus, "train", config.batch_size,
                               seed=_epoch_seed(config.seed, state.epoch))
        i = 0
        while i < len(batches):
            first = batches[i]
            second = batches[i + 1] if i + 1 < len(batches) else None
            if second is not None and second.side != first.side:
                batch_a = first if first.side == "a" else second
                batch_b = second if second.side == "b" else first
                train_step_critics(state, batch_a, batch_b)
                train_step_encoder_generator(state, batch_a, batch_b)
                losses = state.last_losses
                i += 2
            else:
                losses = _rec_only_step(state, first)
                i += 1
            state.step += 1
            metrics.append({"step": state.step, "epoch": state.epoch, **losses})
            maybe_checkpoint()
        state.epoch += 1

    if out_dir and (not checkpoints or checkpoints[-1] != str(out_dir / f"ckpt-{state.step}")):
        maybe_checkpoint(force=True)
    metrics_path = None
    if out_dir:
        metrics_path = out_dir / "metrics.csv"
        _write_metrics(metrics_path, metrics)
    return TrainResult(state, metrics, str(metrics_path) if metrics_path else None,
                       checkpoints)


# ----------------------------------------------------------- state archive

def save_train_state(state: TrainState, out_dir) -> None:
    """Everything needed to resume at an epoch boundary bit-exactly."""
    out = Path(out_dir)
    save_checkpoint(state.model, out / "model")
    named = named_parameters(state.model)
    group_params = {
        "eg": [n for n in named if n.startswith(("encoder.", "generator."))],
        "d": [n for n in named if n.startswith("critic_d.")],
        "m": [n for n in named if n.startswith("critic_m.")],
        "df": [n for n in named if n.startswith("critic_df.")],
    }
    moments = {}
    steps = {}
    for group, opt in state.optimizers.items():
        steps[group] = opt.step
        for slot, buffers in (("m", opt.m), ("v", opt.v)):
            for pname, buf in zip(group_params[group], buffers):
                moments[f"{group}:{slot}:{pname}"] = Tensor(buf)
    write_param_archive(out / "optim", moments, {"steps": steps})
    meta = {"epoch": state.epoch, "step": state.step,
            "form_dims": state.form_dims,
            "optim": vars(state.config.optim),
            "optim_by_group": {g: vars(s) for g, s in
                               state.config.optim_by_group.items()},
            "weights": vars(state.config.weights)}
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True),
                                   encoding="utf-8")


def load_train_state(in_dir, corpus: CorpusPair, config: TrainConfig) -> TrainState:
    src = Path(in_dir)
    state = make_train_state(corpus, config)
    _, arrays = read_param_archive(src / "model")
    for name, t in named_parameters(state.model).items():
        t.data = arrays[name].copy()
    opt_config, moments = read_param_archive(src / "optim")
    named = named_parameters(state.model)
    group_names = {g: [n for n in named if _group_of(n) == g]
                   for g in state.optimizers}
    for key, arr in moments.items():
        group, slot, pname = key.split(":", 2)
        opt = state.optimizers[group]
        idx = group_names[group].index(pname)
        (opt.m if slot == "m" else opt.v)[idx] = arr.copy()
    for group, opt in state.optimizers.items():
        opt.step = int(opt_config["steps"][group])
    meta = json.loads((src / "meta.json").read_text(encoding="utf-8"))
    state.epoch = int(meta["epoch"])
    state.step = int(meta["step"])
    state.form_dims = meta["form_dims"]
    return state


def _group_of(name: str) -> str:
    if name.startswith(("encoder.", "generator.")):
        return "eg"
    if name.startswith("critic_df."):
        return "df"
    if name.startswith("critic_d."):
        return "d"
    return "m"


# ------------------------------------------------------------- diagnostics

def teacher_forced_token_accuracy(model: AdnetModel, batches: list) -> float:
    """Fraction of unpadded target positions whose argmax logit is correct."""
    from .model import merge_latents, gru_step
    from .text import BOS
    hits = total = 0
    for batch in batches:
        latent = encode_batch(model.encoder, batch.tokens, batch.lengths)
        h = merge_latents(model.generator, latent)
        n, steps = batch.tokens.shape
        for t in range(steps):
            inputs = np.full(n, BOS, dtype=np.int64) if t == 0 else batch.tokens[:, t - 1]
            x = T.embedding(model.generator.embedding, inputs)
            h = gru_step(model.generator.gru, x, h)
            logits = (T.matmul(h, T.transpose(model.generator.w_out))
                      + model.generator.b_out).data
            mask = batch.lengths > t
            hits += int((np.argmax(logits, axis=1)[mask] == batch.tokens[mask, t]).sum())
            total += int(mask.sum())
    return hits / max(total, 1)
