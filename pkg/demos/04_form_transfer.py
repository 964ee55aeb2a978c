"""Continuous-form transfer: rewrite archaic sentences as modern ones (and
back) by swapping the form vector while keeping the meaning vector.

The protocol encodes a source sentence, replaces its f with the average f of
k=10 sentences sampled from the opposite register's train split, and greedy
decodes. Averaging matters: individual donor f vectors still carry traces of
their own content, but those traces point in different directions and cancel,
while the shared register direction survives.

Mid-scale run (800 sentences/side, 120 epochs) to keep this under a few
minutes on CPU; the checkpoint is cached under demos/_cache for reuse by the
evaluation demo.
"""

from pathlib import Path

from adnet.model import ModelConfig, load_checkpoint
from adnet.evaluation import transfer_corpus
from adnet.synth import as_corpus_pair, default_register_spec, generate_corpora
from adnet.text import decode
from adnet.training import LossWeights, OptimSettings, TrainConfig, train

CACHE = Path(__file__).resolve().parent / "_cache" / "transfer_run"

spec = default_register_spec(rho=0.3)
corpus = as_corpus_pair(generate_corpora(spec, n_per_register=800, seed=0))

ckpt = max(CACHE.glob("ckpt-*"), default=None,
           key=lambda p: int(p.name.split("-")[1]))
if ckpt is None:
    epochs = 120
    steps_per_epoch = len(corpus.splits_a["train"]) // 32
    config = TrainConfig(
        epochs=epochs, batch_size=32, seed=0,
        weights=LossWeights(lambda_adv=1.0, lambda_motiv=1.0, lambda_f=0.0),
        optim_by_group={"m": OptimSettings(lr=0.016 / (epochs * steps_per_epoch))},
        out_dir=str(CACHE),
        checkpoint_every=epochs * steps_per_epoch,
        model=ModelConfig(vocab_size=corpus.vocab.size, embedding_dim=64,
                          gru_hidden_dim=128, meaning_dim=64, form_dim=64,
                          max_len=20),
    )
    print(f"training {epochs} epochs (one-time, cached to {CACHE}) ...")
    result = train(corpus, config)
    ckpt = Path(result.checkpoint_paths[-1])
model = load_checkpoint(ckpt)
print(f"model loaded from {ckpt}\n")

for src, dst, label in (("a", "b", "archaic -> modern"),
                        ("b", "a", "modern -> archaic")):
    sources = corpus.split_sequences(src, "test")[:6]
    pool = corpus.split_sequences(dst, "train")
    generated = transfer_corpus(model, sources, pool, k=10, seed=0)
    print(f"--- {label} ---")
    for ids, out in zip(sources, generated):
        print(f"  in : {decode(ids, corpus.vocab)}")
        print(f"  out: {decode(out, corpus.vocab)}")
    print()
