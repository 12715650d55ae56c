"""Train one curriculum per extractor (plus random and reverse-order controls) and print the comparison table.

Each run goes through the CLI so that every run directory has the usual
report.json, history.jsonl and checkpoint.
"""

import argparse
import json
from pathlib import Path

from kcl.cli import main as kcl


def run(argv):
    code = kcl(argv)
    if code != 0:
        raise SystemExit(f"kcl {' '.join(argv)} exited with {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("dataset")
    ap.add_argument("--out", default="runs/grid")
    ap.add_argument("--embedding-file")
    ap.add_argument("--seed", default="0")
    ap.add_argument("--epochs", default="10")
    ap.add_argument("--set", action="append", default=[], help="forwarded to kcl train")
    args = ap.parse_args()

    out = Path(args.out)
    base = ["--dataset", args.dataset, "--seed", args.seed, "--epochs", args.epochs]
    for kv in args.set:
        base += ["--set", kv]
    extractors = ["textrank", "yake", "random"] + (["embedding"] if args.embedding_file else [])
    dirs = []
    for ex in extractors:
        flags = base + ["--extractor", ex, "--out", str(out / ex)]
        if args.embedding_file:
            flags += ["--embedding-file", args.embedding_file]
        run(["rank-domains", *flags])
        run(["train", *flags, "--ranking", str(out / ex / "ranking.json")])
        dirs.append(str(out / ex))

    # easy-to-hard is the point; hard-to-easy under the same model is the control
    rec = json.loads((out / "textrank" / "ranking.json").read_text())
    rec["ranking"] = rec["ranking"][::-1]
    rev = out / "reversed"
    rev.mkdir(parents=True, exist_ok=True)
    (rev / "ranking.json").write_text(json.dumps(rec, indent=2) + "\n")
    run(["train", *base, "--out", str(rev), "--ranking", str(rev / "ranking.json")])
    dirs.append(str(rev))

    run(["report", *dirs, "--json", str(out / "table.json")])


if __name__ == "__main__":
    main()
