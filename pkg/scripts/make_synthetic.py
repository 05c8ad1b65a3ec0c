"""Write train/valid/test splits of the synthetic corpus to a directory."""

import argparse
from pathlib import Path

from kg2text.data import write_dataset
from kg2text.synthetic import SyntheticSpec, synthetic_splits


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    ap.add_argument("--train", type=int, default=40)
    ap.add_argument("--valid", type=int, default=10)
    ap.add_argument("--test", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    splits = synthetic_splits(SyntheticSpec(n=args.train), args.valid, args.test, seed=args.seed)
    for name, anns in splits.items():
        write_dataset(args.out / f"{name}.jsonl", anns)
        print(f"{name}: {len(anns)} -> {args.out / f'{name}.jsonl'}")


if __name__ == "__main__":
    main()
