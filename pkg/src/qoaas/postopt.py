"""Post-optimization emission: engine-facing output shapes.

v1 strips every physical decision and hands back the optimized logical
tree (join order preserved); v2 keeps the tree logical but pins the
physical choices a consuming engine is expected to honor (join
implementation, build side, broadcast-vs-shuffle) as hint-only
annotations; full cuts the annotated tree at engine bridges and emits one
physical document per engine segment, wired by bridge ids.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Union

from . import ir
from .errors import UnannotatedNode
from .explorer.api import AnnotatedPlan

EMIT_MODES = ("v1", "v2", "full")


def _is_enforcer(node: ir.PlanNode) -> bool:
    return node.annotation is not None and node.annotation.enforcer


def _strip(node: ir.PlanNode) -> ir.PlanNode:
    return node.with_children(tuple(_strip(c) for c in node.children)) \
        .with_annotation(None)


def _exchange_choice(node: ir.PlanNode) -> str | None:
    """broadcast/shuffle decision feeding a join, read off its children."""
    choice = None
    for c in node.children:
        ann = c.annotation
        if ann is None:
            continue
        if ann.op == "broadcast_exchange":
            return "broadcast"
        if ann.op == "shuffle_exchange":
            choice = "shuffle"
    return choice


def _hint_joins(node: ir.PlanNode) -> ir.PlanNode:
    """Logical tree with hint-only annotations on join nodes."""
    ann = node.annotation
    exchange = _exchange_choice(node) if node.op == "join" else None
    children = tuple(_hint_joins(_drop_one_enforcer(c)) for c in node.children)
    node = node.with_children(children)
    if node.op == "join" and ann is not None \
            and ann.op in ("hash_join", "sort_merge_join"):
        hint = ir.PhysicalAnnotation(op=ann.op, engine=ann.engine,
                                     hint_only=True,
                                     build_side=ann.build_side,
                                     exchange=exchange)
        return node.with_annotation(hint)
    return node.with_annotation(None)


def _drop_one_enforcer(node: ir.PlanNode) -> ir.PlanNode:
    while _is_enforcer(node):
        node = node.children[0]
    return node


def _check_annotated(node: ir.PlanNode, path: str = "root") -> None:
    if node.annotation is None or node.annotation.hint_only:
        raise UnannotatedNode(f"{path}: {node.op} lacks a physical annotation")
    for i, c in enumerate(node.children):
        _check_annotated(c, f"{path}.children[{i}]")


def _segment(root: ir.PlanNode, query_id: str, extensions, catalog) -> list:
    """Cut at engine bridges; producer segments come before consumers."""
    ctx = ir.SchemaContext(catalog)
    segments: list = []
    counter = [0]

    def cut(node: ir.PlanNode) -> ir.PlanNode:
        children = tuple(cut(c) for c in node.children)
        node = node.with_children(children)
        ann = node.annotation
        if ann is not None and ann.op == "engine_bridge":
            counter[0] += 1
            bridge_id = f"b{counter[0]}"
            producer_root = node.children[0]
            schema = ctx.schema(producer_root)
            segments.append(ir.PlanDocument(
                root=producer_root, query_id=f"{query_id}#{bridge_id}",
                segment_of=query_id, engine=ann.from_engine,
                out_bridge=bridge_id))
            return ir.read(ir.BRIDGE_TABLE, inline_schema=schema,
                           bridge_id=bridge_id).with_annotation(
                ir.PhysicalAnnotation(op="table_scan", engine=ann.to_engine))
        return node

    final_root = cut(root)
    engine = _root_engine(final_root)
    segments.append(ir.PlanDocument(root=final_root, query_id=query_id,
                                    extensions=extensions,
                                    segment_of=query_id, engine=engine))
    return segments


def _root_engine(node: ir.PlanNode) -> str:
    if node.annotation is not None:
        return node.annotation.engine
    raise UnannotatedNode("segment root lacks an annotation")


def emit(annotated: Union[AnnotatedPlan, ir.PlanDocument], mode: str,
         catalog=None) -> list:
    """One or more plan documents in the requested emission mode."""
    doc = annotated.doc if isinstance(annotated, AnnotatedPlan) else annotated
    if mode not in EMIT_MODES:
        raise ValueError(f"unknown emit mode {mode!r}")
    if mode == "v1":
        root = _strip(_drop_all_enforcers(doc.root))
        return [replace(doc, root=root, segment_of=None, engine=None,
                        out_bridge=None)]
    if mode == "v2":
        root = _hint_joins(_drop_one_enforcer(doc.root))
        extensions = doc.extensions
        if (ir.HINT_EXTENSION_URI, "physical-hints") not in extensions:
            extensions = extensions + ((ir.HINT_EXTENSION_URI, "physical-hints"),)
        return [replace(doc, root=root, extensions=extensions,
                        segment_of=None, engine=None, out_bridge=None)]
    _check_annotated(doc.root)
    if catalog is None:
        raise ValueError("full-mode emission needs the catalog for schemas")
    return _segment(doc.root, doc.query_id, doc.extensions, catalog)


def _drop_all_enforcers(node: ir.PlanNode) -> ir.PlanNode:
    """Enforcer nodes are physical artifacts; logical emissions drop them
    and let the consuming engine replan the movement."""
    node = _drop_one_enforcer(node)
    return node.with_children(tuple(_drop_all_enforcers(c)
                                    for c in node.children))


def hinted_nodes(doc: ir.PlanDocument) -> list:
    """(path, annotation) for every hint-only annotated node."""
    out = []

    def walk(node, path):
        if node.annotation is not None and node.annotation.hint_only:
            out.append((path, node.annotation))
        for i, c in enumerate(node.children):
            walk(c, f"{path}.children[{i}]")

    walk(doc.root, "root")
    return out
