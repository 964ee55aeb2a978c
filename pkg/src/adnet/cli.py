"""Command-line entry point: synth | train | eval | transfer | export.

Configuration wins in flag > config-file > default order, and every run
directory receives the fully resolved configuration as resolved.json so a run
can be reproduced from its outputs alone. Exit codes: 0 success, 1 usage
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from .evaluation import (
    ClassifierConfig,
    EvalConfig,
    EvalReport,
    LmConfig,
    evaluate_model,
    export_embeddings,
    load_classifier,
    load_language_model,
    save_classifier,
    save_language_model,
    train_language_model,
    train_transfer_classifier,
    transfer_corpus,
)
from .model import (
    LatentPair,
    ModelConfig,
    encode_batch,
    greedy_decode,
    load_checkpoint,
    merge_latents,
)
from .synth import RegisterSpec, generate_corpora, write_corpus
from .text import Vocabulary, decode, encode, load_corpus_pair
from .training import LossWeights, OptimSettings, TrainConfig, train

DEFAULTS = {
    "seed": 0,
    "out": None,
    "data": None,
    "checkpoint": None,
    # synth
    "name": "synth",
    "n": 500,
    "rho": 0.3,
    "fronting_prob": 0.5,
    # model
    "embedding_dim": 64,
    "gru_hidden_dim": 128,
    "meaning_dim": 64,
    "form_dim": 64,
    "critic_hidden_dims": [128, 64],
    "max_len": 20,
    "min_frequency": 2,
    # training
    "lambda_adv": 1.0,
    "lambda_motiv": 1.0,
    "lambda_f": 0.0,
    "epochs": 10,
    "batch_size": 64,
    "lr": 1e-3,
    "clip_c": 0.1,
    "checkpoint_every": 0,
    # transfer / eval
    "form_avg_k": 10,
    "form_from": None,
    "source_register": "a",
    "classifier_epochs": 10,
    "lm_epochs": 10,
    "eval_split": "test",
}


class CliParser(argparse.ArgumentParser):
    """argparse flavor whose usage failures exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _add_common(p: CliParser) -> None:
    p.add_argument("--config", help="JSON file of defaults to override")
    p.add_argument("--seed", type=int, default=None, help="u64 run seed")
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> CliParser:
    parser = CliParser(prog="adnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=CliParser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic register pair")
    _add_common(p)
    p.add_argument("--name", default=None, help="file prefix")
    p.add_argument("--n", type=int, default=None, help="sentences per register")
    p.add_argument("--rho", type=float, default=None, help="shared function-word ratio")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run two-stage training")
    _add_common(p)
    p.add_argument("--data", default=None, help="corpus prefix (expects <prefix>.a.txt/.b.txt)")
    p.add_argument("--meaning-dim", type=int, default=None)
    p.add_argument("--form-dim", type=int, default=None)
    p.add_argument("--lambda-adv", type=float, default=None)
    p.add_argument("--lambda-motiv", type=float, default=None)
    p.add_argument("--lambda-f", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--form-avg-k", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transfer", help="rewrite stdin sentences in the opposite register")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--form-avg-k", type=int, default=None)
    p.add_argument("--form-from", default=None,
                   help="single sentence whose form vector is used directly")
    p.add_argument("--source-register", choices=("a", "b"), default=None,
                   help="register the input lines belong to (default a)")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("export", help="write embedding TSVs")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_export)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicit flags; rejects unknown file keys."""
    config = dict(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        config.update(loaded)
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            config[key] = flag
    if config["seed"] < 0:
        raise ValueError("seed must be a non-negative integer")
    return config


def _write_resolved(config: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.json").write_text(
        json.dumps(config, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _require(config: dict, key: str, command: str) -> str:
    value = config.get(key)
    if not value:
        raise ValueError(f"adnet {command} requires --{key}")
    return value


def _model_config(config: dict, vocab_size: int) -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size,
                       embedding_dim=config["embedding_dim"],
                       gru_hidden_dim=config["gru_hidden_dim"],
                       meaning_dim=config["meaning_dim"],
                       form_dim=config["form_dim"],
                       critic_hidden_dims=list(config["critic_hidden_dims"]),
                       max_len=config["max_len"])


def _train_config(config: dict, vocab_size: int) -> TrainConfig:
    return TrainConfig(
        epochs=config["epochs"], batch_size=config["batch_size"],
        seed=config["seed"],
        weights=LossWeights(config["lambda_adv"], config["lambda_motiv"],
                            config["lambda_f"]),
        optim=OptimSettings(lr=config["lr"]),
        clip_c=config["clip_c"], checkpoint_every=config["checkpoint_every"],
        out_dir=config["out"], model=_model_config(config, vocab_size))


def _load_vocab_near(checkpoint: str) -> Vocabulary:
    root = Path(checkpoint)
    for candidate in (root / "vocab.json", root.parent / "vocab.json"):
        if candidate.exists():
            payload = json.loads(candidate.read_text(encoding="utf-8"))
            return Vocabulary.from_dict(payload)
    raise FileNotFoundError(f"vocab.json not found in {root} or {root.parent}")


def _load_model_and_corpus(config: dict, command: str):
    checkpoint = _require(config, "checkpoint", command)
    data = _require(config, "data", command)
    model = load_checkpoint(checkpoint)
    vocab = _load_vocab_near(checkpoint)
    corpus = load_corpus_pair(data, min_frequency=config["min_frequency"],
                              max_len=model.config.max_len, vocab=vocab)
    return model, corpus


# ---------------------------------------------------------------- commands

def cmd_synth(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = _require(config, "out", "synth")
    spec = RegisterSpec(rho=config["rho"], fronting_prob=config["fronting_prob"])
    corpora = generate_corpora(spec, config["n"], seed=config["seed"])
    paths = write_corpus(corpora, out, config["name"])
    _write_resolved(config, out)
    for path in paths.values():
        print(path)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    data = _require(config, "data", "train")
    out = _require(config, "out", "train")
    corpus = load_corpus_pair(data, min_frequency=config["min_frequency"],
                              max_len=config["max_len"])
    _write_resolved(config, out)
    (Path(out) / "vocab.json").write_text(
        json.dumps(corpus.vocab.to_dict(), indent=1, sort_keys=True) + "\n",
        encoding="utf-8")
    result = train(corpus, _train_config(config, corpus.vocab.size))
    last = result.metrics[-1] if result.metrics else {}
    print(f"trained {len(result.metrics)} steps over {config['epochs']} epochs; "
          f"final l_rec {last.get('l_rec', float('nan')):.4f}")
    print(f"checkpoint: {result.checkpoint_paths[-1]}")
    print(f"metrics: {result.metrics_path}")
    return 0


def _eval_config(config: dict) -> EvalConfig:
    return EvalConfig(
        k=config["form_avg_k"], seed=config["seed"], split=config["eval_split"],
        classifier=ClassifierConfig(epochs=config["classifier_epochs"],
                                    seed=config["seed"]),
        lm=LmConfig(epochs=config["lm_epochs"], seed=config["seed"]))


def cmd_eval(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    model, corpus = _load_model_and_corpus(config, "eval")
    out = config.get("out")
    classifier = lm = None
    if out:
        clf_dir, lm_dir = Path(out) / "classifier", Path(out) / "lm"
        if (clf_dir / "manifest.json").exists():
            classifier = load_classifier(clf_dir)
        if (lm_dir / "manifest.json").exists():
            lm = load_language_model(lm_dir)
    eval_config = _eval_config(config)
    if classifier is None:
        classifier = train_transfer_classifier(corpus, eval_config.classifier)
    if lm is None:
        lm = train_language_model(corpus, eval_config.lm)
    report = evaluate_model(model, corpus, eval_config,
                            classifier=classifier, lm=lm)
    payload = json.dumps(report.to_dict(), indent=1, sort_keys=True)
    print(payload)
    if out:
        _write_resolved(config, out)
        report.save(Path(out) / "report.json")
        if not (Path(out) / "classifier" / "manifest.json").exists():
            save_classifier(classifier, Path(out) / "classifier")
        if not (Path(out) / "lm" / "manifest.json").exists():
            save_language_model(lm, Path(out) / "lm")
    return 0


def cmd_transfer(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    model, corpus = _load_model_and_corpus(config, "transfer")
    lines = [line.rstrip("\n") for line in sys.stdin]
    if not lines:
        return 0
    sequences = [encode(line, corpus.vocab, model.config.max_len) for line in lines]
    if config["form_from"] is not None:
        from .evaluation import _pad_sequences
        form_seq = encode(config["form_from"], corpus.vocab, model.config.max_len)
        tokens, lengths = _pad_sequences(sequences)
        m = encode_batch(model.encoder, tokens, lengths).m
        f_tokens, f_lengths = _pad_sequences([form_seq])
        f_one = encode_batch(model.encoder, f_tokens, f_lengths).f
        f_all = np.repeat(f_one.data, len(sequences), axis=0)
        from .tensor import Tensor
        generated = greedy_decode(model.generator,
                                  LatentPair(m, Tensor(f_all)),
                                  model.config.max_len)
    else:
        pool_side = "b" if config["source_register"] == "a" else "a"
        pool = corpus.split_sequences(pool_side, "train")
        generated = transfer_corpus(model, sequences, pool,
                                    k=config["form_avg_k"], seed=config["seed"])
    for ids in generated:
        print(decode(ids, corpus.vocab))
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    model, corpus = _load_model_and_corpus(config, "export")
    out = _require(config, "out", "export")
    paths = export_embeddings(model, corpus, out, split=config["eval_split"])
    _write_resolved(config, out)
    for path in paths.values():
        print(path)
    return 0


# ---------------------------------------------------------------- dispatch

def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    try:
        return args.func(args)
    except Exception as error:  # runtime failures -> 2, path in message
        print(f"adnet: error: {error}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())


# ------------------------------------------------------------------- smoke

def end_to_end_smoke(out_dir=None, seed: int = 0) -> EvalReport:
    """synth -> train -> eval on a tiny built-in setup; raises with the stage
    name on any failure."""
    own_dir = tempfile.TemporaryDirectory() if out_dir is None else None
    root = Path(own_dir.name if own_dir else out_dir)
    try:
        stage = "synth"
        try:
            spec = RegisterSpec()
            corpora = generate_corpora(spec, 200, seed=seed)
            write_corpus(corpora, root, "smoke")
            corpus = load_corpus_pair(str(root / "smoke"))

            stage = "train"
            model_config = ModelConfig(vocab_size=corpus.vocab.size,
                                       embedding_dim=16, gru_hidden_dim=32,
                                       meaning_dim=16, form_dim=16,
                                       critic_hidden_dims=[32, 16],
                                       max_len=corpus.max_len)
            result = train(corpus, TrainConfig(
                epochs=10, batch_size=64, seed=seed, model=model_config,
                out_dir=str(root / "run")))

            stage = "eval"
            report = evaluate_model(
                result.state.model, corpus,
                EvalConfig(seed=seed,
                           classifier=ClassifierConfig(epochs=6, seed=seed),
                           lm=LmConfig(epochs=6, seed=seed)))
            report.validate_ranges()
            return report
        except Exception as error:
            raise RuntimeError(f"smoke stage '{stage}' failed: {error}") from error
    finally:
        if own_dir:
            own_dir.cleanup()
