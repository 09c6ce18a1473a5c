"""Full-scale 6-way runs on the public Fakeddit release.

Trains and evaluates every configuration on the official splits and compares
test accuracy with the reference numbers below.  Each run is expected to land
within +-0.02 of its target.  This needs the complete corpus (about a million
titles, plus the multimodal images fetched with ``ffn fetch-images``), the
GloVe 840B.300d vectors, a local ``bert-base-uncased`` checkout and a GPU-class
budget; it is never run by the test suite.

    python scripts/run_fakeddit_full.py --data-dir /data/fakeddit \\
        --glove /data/glove.840B.300d.txt --bert-dir /models/bert-base-uncased \\
        --out runs/full

The data directory must contain the Fakeddit TSVs under their released names
(``all_train.tsv``, ``all_validate.tsv``, ``all_test_public.tsv`` and the
``multimodal_*`` counterparts); images go in ``<data-dir>/images`` unless
``--image-dir`` is given.  Label integers follow the release's ``6_way_label``
numbering, hence ``schema = "fakeddit"``.
"""

import argparse
import json
import sys
from pathlib import Path

from ffn.cli import main as ffn

TOLERANCE = 0.02

UNIMODAL = {"train_file": "all_train.tsv", "validation_file": "all_validate.tsv",
            "test_file": "all_test_public.tsv"}
MULTIMODAL = {"train_file": "multimodal_train.tsv", "validation_file": "multimodal_validate.tsv",
              "test_file": "multimodal_test_public.tsv"}

# name, run settings, target test accuracy
RUNS = [
    ("cnn-random", dict(model="cnn", embedding_init="random", embedding_mode="dynamic"), 0.72),
    ("cnn-glove-static", dict(model="cnn", embedding_init="glove", embedding_mode="static"), 0.73),
    ("cnn-glove-dynamic", dict(model="cnn", embedding_init="glove", embedding_mode="dynamic"), 0.74),
    ("bilstm-random", dict(model="bilstm", embedding_init="random", embedding_mode="dynamic"), 0.72),
    ("bilstm-glove-static", dict(model="bilstm", embedding_init="glove", embedding_mode="static"), 0.73),
    ("bilstm-glove-dynamic", dict(model="bilstm", embedding_init="glove", embedding_mode="dynamic"), 0.75),
    ("bert", dict(model="bert"), 0.78),
    ("multimodal", dict(model="multimodal", embedding_init="random", embedding_mode="dynamic"), 0.87),
]


def run(name, settings, args):
    out = Path(args.out) / name
    out.mkdir(parents=True, exist_ok=True)
    cfg = dict(settings, schema="fakeddit", seed=args.seed,
               **(MULTIMODAL if settings["model"] == "multimodal" else UNIMODAL))
    if settings.get("embedding_init") == "glove":
        cfg["glove_path"] = args.glove
    if settings["model"] == "bert":
        cfg["bert_dir"] = args.bert_dir
    if args.image_dir:
        cfg["image_dir"] = args.image_dir
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")

    common = ["--data-dir", args.data_dir, "--out", str(out)]
    code = ffn(["train", "--config", str(out / "config.json"), *common])
    if code != 0:
        return None
    eval_args = ["evaluate", "--checkpoint", str(out / "checkpoint"), "--split", "test", *common]
    if args.image_dir:
        eval_args += ["--image-dir", args.image_dir]
    if ffn(eval_args) != 0:
        return None
    return json.loads((out / "report_test.json").read_text())["accuracy"]


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--glove", required=True, help="GloVe 840B.300d text file")
    p.add_argument("--bert-dir", required=True, help="local bert-base-uncased directory")
    p.add_argument("--image-dir")
    p.add_argument("--out", default="runs/full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", nargs="*", help="subset of run names")
    return p.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    rows, ok = [], True
    for name, settings, target in RUNS:
        if args.only and name not in args.only:
            continue
        acc = run(name, settings, args)
        hit = acc is not None and abs(acc - target) <= TOLERANCE
        ok &= hit
        rows.append((name, target, acc, hit))
    print(f"{'run':<22}{'target':>8}{'got':>8}  within +-{TOLERANCE}")
    for name, target, acc, hit in rows:
        got = "failed" if acc is None else f"{acc:.3f}"
        print(f"{name:<22}{target:>8.2f}{got:>8}  {'yes' if hit else 'NO'}")
    summary = {name: {"target": t, "accuracy": a, "within_tolerance": h} for name, t, a, h in rows}
    (Path(args.out) / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
