"""Model and result persistence.

Model files are a single UTF-8 JSON document; results are append-only JSONL,
one record per (configuration, repetition). Floats round-trip bit-exactly
through the shortest-repr encoding, so identical models serialize to
identical bytes.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .forest import Forest, Tree, TreeNode

log = logging.getLogger(__name__)

MODEL_FORMAT = "pfliforest-model/1"
RECORD_VERSION = "pfliforest-exp/1"


class ModelFormatError(ValueError):
    """Raised when a model document does not match the schema."""


def _node_to_obj(node: TreeNode) -> dict:
    if node.is_leaf():
        return {"split": None, "left": None, "right": None}
    return {
        "split": node.split_value,
        "left": _node_to_obj(node.left),
        "right": _node_to_obj(node.right),
    }


def _node_from_obj(obj, where: str) -> TreeNode:
    if not isinstance(obj, dict) or set(obj) != {"split", "left", "right"}:
        raise ModelFormatError(f"bad node object at {where}")
    split, left, right = obj["split"], obj["left"], obj["right"]
    if split is None:
        if left is not None or right is not None:
            raise ModelFormatError(f"leaf with children at {where}")
        return TreeNode()
    if left is None or right is None:
        raise ModelFormatError(f"internal node missing a child at {where}")
    return TreeNode(
        split_value=float(split),
        left=_node_from_obj(left, where + ".left"),
        right=_node_from_obj(right, where + ".right"),
    )


def forest_to_json(forest: Forest, train_size: int | None = None) -> str:
    """Serialize; train_size defaults to the first tree's training count."""
    if train_size is None:
        train_size = forest.trees[0].train_size if forest.trees else 0
    doc = {
        "format": MODEL_FORMAT,
        "builder": forest.builder,
        "seed": int(forest.seed),
        "max_depth": int(forest.max_depth),
        "train_size": int(train_size),
        "trees": [_node_to_obj(t.root) for t in forest.trees],
    }
    return json.dumps(doc, separators=(",", ":"), sort_keys=True)


def forest_from_json(text: str) -> Forest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: line {exc.lineno} col {exc.colno}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"unsupported model format {doc.get('format')!r}"
                               if isinstance(doc, dict) else "model document is not an object")
    try:
        builder = doc["builder"]
        seed = int(doc["seed"])
        max_depth = int(doc["max_depth"])
        train_size = int(doc["train_size"])
        tree_objs = doc["trees"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"missing or invalid field: {exc}") from exc
    if builder not in ("federated", "baseline"):
        raise ModelFormatError(f"unknown builder {builder!r}")
    if not isinstance(tree_objs, list):
        raise ModelFormatError("trees must be a list")
    trees = [
        Tree(root=_node_from_obj(obj, f"trees[{i}]"), train_size=train_size)
        for i, obj in enumerate(tree_objs)
    ]
    return Forest(trees=trees, max_depth=max_depth, builder=builder, seed=seed)


def save_model(forest: Forest, path) -> None:
    Path(path).write_text(forest_to_json(forest) + "\n", encoding="utf-8")


def load_model(path) -> Forest:
    return forest_from_json(Path(path).read_text(encoding="utf-8"))


def append_records(records: list[dict], path) -> None:
    """Append experiment records as JSONL; creates the file if needed."""
    with open(path, "a", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":"), sort_keys=True) + "\n")


def read_records(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ModelFormatError(f"{path}:{lineno}: bad record: {exc}") from exc
    return records


def read_records_lenient(path) -> tuple[list[dict], int]:
    """Like read_records, but corrupt lines are skipped and counted."""
    records = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                log.warning("%s:%d: skipping corrupt record", path, lineno)
                skipped += 1
    return records, skipped
