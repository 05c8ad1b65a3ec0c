"""Line-delimited JSON dataset files.

One record per line::

    {"title": "...", "abstract": "...",
     "entities": [{"mention": "...", "type": "Method"}, ...],
     "coref": [[0, 3], ...],
     "relations": [[0, "Used-for", 2], ...]}

Text fields are whitespace tokenised.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable

from .graph import SciAnnotation, SchemaError

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class DatasetError(ValueError):
    pass


def record_to_annotation(rec: dict) -> SciAnnotation:
    try:
        ann = SciAnnotation(
            title=str(rec["title"]).split(),
            abstract=str(rec["abstract"]).split(),
            entity_mentions=[(tuple(str(e["mention"]).split()), str(e["type"]))
                             for e in rec.get("entities", [])],
            coref_clusters=[[int(i) for i in c] for c in rec.get("coref", [])],
            relations=[(int(h), str(lab), int(t)) for h, lab, t in rec.get("relations", [])],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed record: {exc!r}") from exc
    ann.validate()
    return ann


def annotation_to_record(a: SciAnnotation) -> dict:
    return {
        "title": " ".join(a.title),
        "abstract": " ".join(a.abstract),
        "entities": [{"mention": " ".join(p), "type": t} for p, t in a.entity_mentions],
        "coref": [list(c) for c in a.coref_clusters],
        "relations": [[h, lab, t] for h, lab, t in a.relations],
    }


def parse_dataset(path: str | Path, strict: bool = True) -> list[SciAnnotation]:
    """Read and validate a dataset file; lenient mode logs and skips bad lines."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror}") from exc
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(record_to_annotation(json.loads(line)))
        except (json.JSONDecodeError, SchemaError) as exc:
            msg = f"{path}:{lineno}: {exc}"
            if strict:
                raise DatasetError(msg) from exc
            log.warning("skipping %s", msg)
    return out


def write_dataset(path: str | Path, annotations: Iterable[SciAnnotation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in annotations:
            fh.write(json.dumps(annotation_to_record(a)) + "\n")


def load_splits(data_dir: str | Path, strict: bool = True) -> dict[str, list[SciAnnotation]]:
    data_dir = Path(data_dir)
    splits = {}
    for name in SPLITS:
        p = data_dir / f"{name}.jsonl"
        if p.exists():
            splits[name] = parse_dataset(p, strict)
    if "train" not in splits:
        raise DatasetError(f"{data_dir} has no train.jsonl")
    return splits
