"""The same workflow as demos 01-05, driven entirely through the CLI.

Runs the five subcommands against a temp directory at toy scale: generate a
corpus, train briefly, evaluate, transfer a few sentences from stdin, and
export latent tables. Prints each command before running it, so this doubles
as a cheat sheet.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

root = Path(tempfile.mkdtemp(prefix="adnet-demo-"))
data_dir = root / "corpus"
run = root / "run"


def sh(args, stdin=None):
    print(f"$ adnet {' '.join(args)}")
    proc = subprocess.run([sys.executable, "-m", "adnet.cli", *args],
                          input=stdin, capture_output=True, text=True)
    if proc.returncode != 0:
        print(proc.stderr)
        raise SystemExit(f"command failed with {proc.returncode}")
    return proc.stdout


sh(["synth", "--out", str(data_dir), "--n", "200", "--rho", "0.3", "--seed", "0"])
print(f"  wrote {sorted(p.name for p in data_dir.iterdir())}\n")

data = str(data_dir / "synth")  # corpus prefix: <prefix>.a.txt / <prefix>.b.txt
sh(["train", "--data", data, "--out", str(run), "--epochs", "8",
    "--batch-size", "32", "--meaning-dim", "16", "--form-dim", "16",
    "--seed", "0"])
metrics = (run / "metrics.csv").read_text().splitlines()
print(f"  metrics.csv: {len(metrics) - 1} rows, header {metrics[0]}")
print(f"  last row    {metrics[-1]}\n")

ckpt = str(max(run.glob("ckpt-*"), key=lambda p: int(p.name.split("-")[1])))
out = sh(["eval", "--data", data, "--checkpoint", ckpt, "--out",
          str(run / "eval"), "--seed", "0"])
report = json.loads(out)
print(f"  transfer {report['transfer_strength']:.3f}, "
      f"content {report['content_preservation']:.3f} "
      f"(toy scale, 8 epochs: do not expect separation yet)\n")

sentences = "the scholar kept a small book .\nstars fade at dawn .\n"
out = sh(["transfer", "--data", data, "--checkpoint", ckpt,
          "--source-register", "a", "--form-avg-k", "10", "--seed", "0"],
         stdin=sentences)
for src, hyp in zip(sentences.splitlines(), out.splitlines()):
    print(f"  {src}  ->  {hyp}")
print()

sh(["export", "--data", data, "--checkpoint", ckpt, "--out",
    str(run / "export")])
for name in ("meaning.tsv", "form.tsv", "labels.tsv"):
    n = len((run / "export" / name).read_text().splitlines())
    print(f"  export/{name}: {n} rows")

print(f"\nartifacts left under {root}")
