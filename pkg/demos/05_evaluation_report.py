"""Score a trained model with the full evaluation protocol.

Reuses the checkpoint cached by demos/04_form_transfer.py (run that first if
missing). Reports: transfer strength from an independently trained register
classifier, content preservation from pooled-embedding cosine, fluency
perplexities from an independent language model, and linear probes plus
silhouettes measuring how much register information lives in each latent.
On top of the learned-model metrics, the synthetic grammar's oracle checks
template-level meaning preservation exactly.
"""

import json
from pathlib import Path

from adnet.evaluation import EvalConfig, evaluate_model, transfer_corpus
from adnet.model import load_checkpoint
from adnet.synth import as_corpus_pair, default_register_spec, generate_corpora, oracle_scores
from adnet.text import decode

CACHE = Path(__file__).resolve().parent / "_cache" / "transfer_run"
ckpt = max(CACHE.glob("ckpt-*"), default=None,
           key=lambda p: int(p.name.split("-")[1]))
if ckpt is None:
    raise SystemExit("no cached checkpoint; run demos/04_form_transfer.py first")

spec = default_register_spec(rho=0.3)
synth = generate_corpora(spec, n_per_register=800, seed=0)
corpus = as_corpus_pair(synth)
model = load_checkpoint(ckpt)

report = evaluate_model(model, corpus, EvalConfig(seed=0))
print(json.dumps(report.to_dict(), indent=2))

print("\nhow to read it:")
print(f"  transfer_strength   {report.transfer_strength:.3f}  "
      f"(fraction of swapped generations the register classifier accepts)")
print(f"  content_preservation {report.content_preservation:.3f}  "
      f"(pooled-embedding cosine between source and transfer)")
print(f"  ppl ratio           {report.ppl_transferred / report.ppl_original:.2f}  "
      f"(swapped vs reconstructed fluency; 1.0 means no degradation)")
print(f"  meaning probe       {report.meaning_probe_acc:.3f}  "
      f"(register decodability from m; 0.5 is chance = fully stripped)")
print(f"  form probe          {report.form_probe_acc:.3f}  "
      f"(register decodability from f; high is the point of the motivator)")

# grammar-level oracle on the a -> b direction
sources = corpus.split_sequences("a", "test")
pool = corpus.split_sequences("b", "train")
generated = transfer_corpus(model, sources, pool, k=10, seed=0)
texts = [decode(g, corpus.vocab) for g in generated]
tids = [synth.templates_a[i] for i in corpus.splits_a["test"]]
scored = oracle_scores(spec, texts, "b", tids)
print(f"\noracle a->b: meaning-match {scored.meaning_match:.3f}, "
      f"form-match {scored.form_match:.3f}, "
      f"unalignable {scored.n_unalignable}/{scored.n_total}")
