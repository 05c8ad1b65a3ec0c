"""Held-out BLEU with and without the copy mechanism (per seed, plus the median)."""

import argparse
import json
import logging

from kg2text.experiments import copy_ablation, median


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--beam", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)
    res = copy_ablation(args.seeds, epochs=args.epochs, beam=args.beam)
    res["median"] = {k: median(v) for k, v in res.items()}
    print(json.dumps(res, indent=2))


if __name__ == "__main__":
    main()
