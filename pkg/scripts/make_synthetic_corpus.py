"""Write the synthetic corpus (a keyword-rich "planted" domain and a "diffuse" one) to disk."""

import argparse

from kcl.synthetic import SyntheticSpec, write_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-train", type=int, default=SyntheticSpec.n_train)
    ap.add_argument("--n-test", type=int, default=SyntheticSpec.n_test)
    args = ap.parse_args()
    spec = SyntheticSpec(n_train=args.n_train, n_test=args.n_test)
    root = write_corpus(args.out, args.seed, spec)
    print(f"wrote {root} (embeddings.txt included)")


if __name__ == "__main__":
    main()
