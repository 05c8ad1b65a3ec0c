"""Command-line entry point: prep, stats, train, generate, evaluate, train-embedder, infer-entities."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import PRESETS, RunConfig, parse_value
from .data import DatasetError, load_splits, parse_dataset
from .entity_inference import EntityEmbedder, TitleIndex, infer_entities, train_embedder
from .generator import bleu, generate_text
from .graph import corpus_stats
from .model import GraphWriter
from .preprocess import make_instance, preprocess
from .trainer import train

log = logging.getLogger("kg2text")

DATA_ENV = "KG2TEXT_DATA"


def _resolve_config(args) -> RunConfig:
    overrides = dict(PRESETS[args.preset]) if getattr(args, "preset", None) else {}
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        overrides[key] = parse_value(key, raw)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return RunConfig.load(getattr(args, "config", None), overrides)


def _data_dir(args) -> Path:
    d = args.data or os.environ.get(DATA_ENV)
    if not d:
        raise ValueError(f"no --data given and ${DATA_ENV} is unset")
    return Path(d)


def _echo_config(cfg: RunConfig, out: Path) -> None:
    cfg.save(out.with_name(out.name + ".config.json"))


def _read_text_lines(path: str) -> list[str]:
    if path.endswith(".jsonl"):
        return [make_instance(a).reference_text() for a in parse_dataset(path)]
    return Path(path).read_text(encoding="utf-8").splitlines()


def cmd_prep(args) -> int:
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        for a in parse_dataset(args.data, strict=not args.lenient):
            inst = make_instance(a, keep_relations=args.variant != "entity_only")
            fh.write(json.dumps({
                "title": " ".join(inst.title),
                "entities": [" ".join(p) for p, _ in inst.kg.entities],
                "relations": [[h, lab, t] for h, lab, t in inst.kg.edges],
                "vertices": inst.graph.n,
                "directed_edges": int(inst.graph.adjacency.sum()),
                "target": inst.target,
            }) + "\n")
    return 0


def cmd_stats(args) -> int:
    p = Path(args.data)
    if p.is_dir():
        anns = [a for split in load_splits(p, strict=not args.lenient).values() for a in split]
    else:
        anns = parse_dataset(p, strict=not args.lenient)
    print(corpus_stats(anns).format())
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    splits = load_splits(_data_dir(args))
    mcfg = cfg.model_config()
    vocab, labels, train_set = preprocess(splits["train"], cfg.unk_threshold, mcfg.keep_relations)
    valid = [make_instance(a, mcfg.keep_relations) for a in splits.get("valid", [])]
    res = train(mcfg, cfg.train_config(), train_set, valid, vocab, labels)
    out = Path(args.out)
    res.model.save(out, extra={"run": cfg.to_dict(), "best_epoch": res.best_epoch})
    _echo_config(cfg, out)
    log.info("best epoch %s of %d", res.best_epoch, len(res.log))
    return 0


def cmd_generate(args) -> int:
    model = GraphWriter.load(args.ckpt)
    run = RunConfig.from_dict(model.meta["extra"].get("run", {}))
    beam = args.beam if args.beam is not None else run.beam
    max_len = args.max_len if args.max_len is not None else run.max_len
    lines = []
    for a in parse_dataset(args.data):
        inst = make_instance(a, model.cfg.keep_relations)
        lines.append(generate_text(model, inst, beam, max_len, prune=not args.no_postprocess))
    out = Path(args.out)
    out.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    run.beam, run.max_len = beam, max_len
    _echo_config(run, out)
    return 0


def cmd_evaluate(args) -> int:
    hyp = Path(args.hyp).read_text(encoding="utf-8").splitlines()
    ref = _read_text_lines(args.ref)
    print(f"BLEU {bleu(hyp, ref):.2f}")
    return 0


def cmd_train_embedder(args) -> int:
    cfg = _resolve_config(args)
    splits = load_splits(_data_dir(args))
    emb, history = train_embedder(splits["train"], cfg.negatives, cfg.embed_dim, cfg.embed_epochs,
                                  cfg=cfg.train_config(), seed=cfg.seed)
    out = Path(args.out)
    emb.save(out)
    TitleIndex.build(splits["train"]).save(args.index)
    _echo_config(cfg, out)
    log.info("embedder loss %.4f -> %.4f", history[0], history[-1])
    return 0


def cmd_infer_entities(args) -> int:
    emb = EntityEmbedder.load(args.ckpt)
    index = TitleIndex.load(args.index)
    for e in infer_entities(args.title, index, emb, args.k, args.threshold):
        print(e)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kg2text", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def cfg_flags(p):
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("prep", help="collapse coref, canonicalize abstracts, prepare graphs")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="graph_transformer")
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(fn=cmd_prep)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--data", required=True, help="dataset file or split directory")
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("train", help="train a generation model")
    cfg_flags(p)
    p.add_argument("--data", help=f"split directory (default ${DATA_ENV})")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="decode abstracts, one per line")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--beam", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--no-postprocess", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="corpus BLEU of hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True, help="text file, or .jsonl dataset")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("train-embedder", help="train the title/entity embedder and build the index")
    cfg_flags(p)
    p.add_argument("--data", help=f"split directory (default ${DATA_ENV})")
    p.add_argument("--out", required=True)
    p.add_argument("--index", required=True)
    p.set_defaults(fn=cmd_train_embedder)

    p = sub.add_parser("infer-entities", help="entities related to a title")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--title", required=True)
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--threshold", type=float, default=0.7)
    p.set_defaults(fn=cmd_infer_entities)
    return ap


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (DatasetError, ValueError, KeyError, FileNotFoundError, OSError) as exc:
        print(f"kg2text {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
