"""Domain order for every extractor across a range of keyword counts N."""

import argparse

from kcl.corpus import load_dataset, split
from kcl.keywords import extract_keywords, load_embedding_table, rank_from_keywords


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("dataset")
    ap.add_argument("--n", default="30,40,50,60,70")
    ap.add_argument("--extractors", default="textrank,yake,embedding")
    ap.add_argument("--embedding-file")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    data = split(load_dataset(args.dataset), 0.8, args.seed)
    table = load_embedding_table(args.embedding_file) if args.embedding_file else None
    ns = [int(v) for v in args.n.split(",")]
    for ex in args.extractors.split(","):
        if ex == "embedding" and table is None:
            print(f"{ex:9s}  skipped (no --embedding-file)")
            continue
        lists = extract_keywords(data, ex, table)  # extract once, slice per N
        for n in ns:
            r = rank_from_keywords(lists, n, ex, data.domains)
            print(f"{ex:9s} N={n:<3d} " + " > ".join(f"{d}({w:.4f})" for d, w in r.entries))


if __name__ == "__main__":
    main()
