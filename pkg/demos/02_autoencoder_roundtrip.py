"""Sanity run: with both adversarial weights at zero the model is a plain
sequence autoencoder, and a ten-sentence corpus should round-trip exactly.

Trains for 300 epochs on CPU (about half a minute) and then greedy-decodes
each training sentence from its own latent pair.
"""

import numpy as np

from adnet.model import ModelConfig, encode_batch, greedy_decode
from adnet.text import build_corpus_pair, decode, encode
from adnet.training import LossWeights, TrainConfig, train

LINES_A = [
    "stars fade at dawn .",
    "the cat sat on the mat .",
    "rain falls .",
    "children laughed loudly in the park yesterday .",
    "a quiet storm moved east .",
]
LINES_B = [
    "ships sail tonight .",
    "her lamp glowed near the window .",
    "bread smells warm .",
    "seven owls watched the cold silver moon .",
    "time slips away .",
]

splits = ({"train": list(range(5)), "valid": [], "test": []},
          {"train": list(range(5)), "valid": [], "test": []})
corpus = build_corpus_pair(LINES_A, LINES_B, min_frequency=1, max_len=12,
                           splits=splits)

config = TrainConfig(
    epochs=300, batch_size=2, seed=0,
    weights=LossWeights(lambda_adv=0.0, lambda_motiv=0.0, lambda_f=0.0),
    model=ModelConfig(vocab_size=corpus.vocab.size, embedding_dim=32,
                      gru_hidden_dim=64, meaning_dim=32, form_dim=32,
                      critic_hidden_dims=[16], max_len=12),
)
config.optim.lr = 2.5e-3

print(f"vocab {corpus.vocab.size}, training {config.epochs} epochs ...")
result = train(corpus, config)
print(f"done in {result.state.step} steps, "
      f"final reconstruction loss {result.metrics[-1]['l_rec']:.4f}\n")

model = result.state.model
exact = 0
for text in LINES_A + LINES_B:
    ids = encode(text, corpus.vocab, max_len=12)
    tokens = np.array([ids], dtype=np.int64)
    lengths = np.array([len(ids)], dtype=np.int64)
    latent = encode_batch(model.encoder, tokens, lengths)
    out = decode(greedy_decode(model.generator, latent, 12)[0], corpus.vocab)
    marker = "==" if out == text else "!="
    exact += out == text
    print(f"  {text}\n  {marker} {out}\n")
print(f"{exact}/10 exact round trips")
