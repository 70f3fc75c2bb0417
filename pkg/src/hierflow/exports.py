# exports.py
"""
Serialization of fitted hierarchies, partitions and models.

    hierarchy   Newick with branch lengths (parent height - child height) and an
                NHX comment [&&NHX:H=<height>] carrying every internal height
                exactly; Graphviz DOT for viewing
    partition   JSON {schema, level, exact, labels}, CSV, GeoJSON
    model       JSON with node weights, g per bin, ladder and objective
    report      JSON with trajectory and move log; moves also as CSV
All JSON files carry "schema": SCHEMA_VERSION.
"""
import os
import csv
import json
import re
import logging

import numpy as np
from shapely.geometry import Point, mapping
from treeswift import Node, Tree, read_tree_newick

from config import SCHEMA_VERSION, TOOL_NAME, TOOL_VERSION
from hierflow.data_structures import BinSpec, FitReport, ModelParams, Partition
from hierflow.exceptions import InputValidationError
from hierflow.hierarchy import UltrametricHierarchy

logger = logging.getLogger(__name__)

_PLAIN_NAME = re.compile(r"^[A-Za-z0-9_.\-]+$")
_NHX_HEIGHT = re.compile(r"H=([^:\]]+)")


# Newick ---------------------------------------------------------------------

def _quote(name):
    if _PLAIN_NAME.match(name):
        return name
    return "'" + name.replace("'", "''") + "'"


def _unquote(label):
    label = (label or "").strip()
    if len(label) >= 2 and label[0] == "'" and label[-1] == "'":
        return label[1:-1].replace("''", "'")
    return label


def _nhx_height(label):
    match = _NHX_HEIGHT.search(label or "")
    return float(match.group(1)) if match else None


def to_tree(hier: UltrametricHierarchy) -> Tree:
    """treeswift Tree with quoted leaf labels, NHX height labels and branch lengths"""
    tree = Tree(is_rooted=False)
    n = hier.n_leaves
    if n == 0:
        return tree
    names = hier.leaf_names(range(n))

    def build(v):
        if v < n:
            node = Node(label=_quote(names[v]))
        else:
            node = Node(label=f"[&&NHX:H={float(hier.height[v])!r}]")
            for child in hier.children[v]:
                node.add_child(build(child))
        p = hier.parent[v]
        if p >= 0:
            node.edge_length = float(hier.height[p] - hier.height[v])
        return node

    tree.root = build(hier.root)
    return tree


def to_newick(hier: UltrametricHierarchy) -> str:
    if hier.n_leaves == 0:
        return ";"
    return to_tree(hier).newick()


def from_newick(text, ladder, node_ids=None) -> UltrametricHierarchy:
    """
    Rebuild a hierarchy from to_newick output. Internal heights come from the
    NHX H= comments when present, otherwise from leaf-to-root branch lengths.
    Leaves are indexed by node_ids order when given, else in order of appearance.
    """
    text = text.strip()
    if text == ";":
        return UltrametricHierarchy.from_links(0, {}, {}, ladder, node_ids)
    if not text.endswith(";") or "\n" in text:
        raise InputValidationError("Newick text must hold a single tree terminated by ';'")
    try:
        root = read_tree_newick(text).root
    except RuntimeError as e:
        raise InputValidationError(f"Newick parse error: {e}")

    leaves = []

    def collect(node):
        if node.is_leaf():
            leaves.append(_unquote(node.label))
        for child in node.children:
            collect(child)

    collect(root)
    if node_ids is None:
        node_ids = tuple(leaves)
    node_ids = tuple(node_ids)
    if sorted(leaves) != sorted(node_ids) or len(set(leaves)) != len(leaves):
        raise InputValidationError("Newick leaves do not match the node set")
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    n = len(node_ids)

    parent_of, height_of = {}, {}
    next_id = [n]

    def depth_to_leaf(node):
        if node.is_leaf():
            return 0.0
        first = node.children[0]
        return (first.edge_length or 0.0) + depth_to_leaf(first)

    def build(node, parent):
        if node.is_leaf():
            v = index[_unquote(node.label)]
        else:
            v = next_id[0]
            next_id[0] += 1
            height = _nhx_height(node.label)
            height_of[v] = height if height is not None else depth_to_leaf(node)
            for child in node.children:
                build(child, v)
        parent_of[v] = parent
        return v

    build(root, None)
    ladder = np.asarray(ladder)
    for v, h in height_of.items():
        height_of[v] = float(ladder[np.argmin(np.abs(ladder - h))]) if np.min(np.abs(ladder - h)) < 1e-9 else h
    return UltrametricHierarchy.from_links(n, parent_of, height_of, tuple(ladder), node_ids)


def write_newick(hier: UltrametricHierarchy, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(to_newick(hier) + "\n")
    return path


def read_newick(path, ladder, node_ids=None) -> UltrametricHierarchy:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Hierarchy file not found at: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return from_newick(f.read(), ladder, node_ids)


def ladder_from_newick(text):
    """Sorted distinct internal heights named in a Newick string"""
    heights = sorted({float(h) for h in _NHX_HEIGHT.findall(text)})
    return tuple(heights)


def to_dot(hier: UltrametricHierarchy) -> str:
    lines = ["digraph hierarchy {", "  rankdir=BT;"]
    names = hier.leaf_names(range(hier.n_leaves))
    for v in range(hier.n_vertices):
        if v < hier.n_leaves:
            label = names[v].replace('"', '\\"')
            lines.append(f'  n{v} [label="{label}", shape=box];')
        else:
            lines.append(f'  n{v} [label="h={hier.height[v]:.4f}", shape=ellipse];')
    for v, p in enumerate(hier.parent):
        if p >= 0:
            lines.append(f"  n{v} -> n{p};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# partitions -----------------------------------------------------------------

def _partition_ids(partition: Partition):
    return partition.node_ids or tuple(str(i) for i in range(partition.n))


def partition_to_dict(partition: Partition):
    return {
        "schema": SCHEMA_VERSION,
        "level": partition.level,
        "exact": partition.exact,
        "n_communities": partition.n_communities,
        "labels": partition.as_mapping(),
    }


def write_partition_json(partition: Partition, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(partition_to_dict(partition), f, indent=2)
    return path


def read_partition_json(path) -> Partition:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Partition file not found at: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InputValidationError(f"partition file {path} is not valid JSON: {e}")
    if "labels" not in data:
        raise InputValidationError(f"partition file {path} has no 'labels' mapping")
    node_ids = tuple(data["labels"])
    labels = [int(data["labels"][node_id]) for node_id in node_ids]
    return Partition(labels=labels, level=float(data.get("level", 0.0)),
                     exact=bool(data.get("exact", True)), node_ids=node_ids)


def write_partition_csv(partition: Partition, path):
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile, lineterminator="\n")
        writer.writerow(["id", "community"])
        for node_id, label in zip(_partition_ids(partition), partition.labels):
            writer.writerow([node_id, int(label)])
    return path


def partition_to_geojson(partition: Partition, nodes):
    """FeatureCollection with one Point per node; nodes without coordinates get null geometry"""
    by_id = {node.id: node for node in nodes}
    features = []
    for node_id, label in zip(_partition_ids(partition), partition.labels):
        node = by_id.get(node_id)
        geometry = None
        if node is not None and node.coordinate is not None:
            lat, lon = node.coordinate
            geometry = mapping(Point(lon, lat))
        features.append({
            "type": "Feature",
            "geometry": geometry,
            "properties": {"id": node_id, "label": node.label if node else node_id,
                           "community": int(label)},
        })
    return {"type": "FeatureCollection", "schema": SCHEMA_VERSION, "level": partition.level,
            "exact": partition.exact, "features": features}


def write_partition_geojson(partition: Partition, nodes, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(partition_to_geojson(partition, nodes), f, indent=2)
    return path


# model and report -----------------------------------------------------------

def model_to_dict(params: ModelParams, hier: UltrametricHierarchy, bins: BinSpec, objective_kind,
                  objective_value, mode):
    ids = params.node_ids or hier.node_ids or tuple(str(i) for i in range(params.n))
    return {
        "schema": SCHEMA_VERSION,
        "tool": TOOL_NAME,
        "tool_version": TOOL_VERSION,
        "mode": mode,
        "objective": {"kind": objective_kind, "value": objective_value},
        "deterrence_form": ModelParams.deterrence_form,
        "nodes": list(ids),
        "w_out": {node_id: float(w) for node_id, w in zip(ids, params.w_out)},
        "w_in": {node_id: float(w) for node_id, w in zip(ids, params.w_in)},
        "g": {"bins": bins.to_dict(), "values": [float(v) for v in params.g],
              "flagged_bins": list(params.flagged_bins)},
        "ladder": list(hier.ladder),
        "hierarchy_newick": to_newick(hier),
    }


def write_model_json(params, hier, bins, objective_kind, objective_value, mode, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(params, hier, bins, objective_kind, objective_value, mode), f, indent=2)
    logger.info(f"Wrote model to {path}")
    return path


def read_model_json(path):
    """
    Returns (params, hierarchy or None, bins, data). Weights are ordered by the
    file's node list.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Model file not found at: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InputValidationError(f"model file {path} is not valid JSON: {e}")
    try:
        ids = tuple(data["nodes"])
        w_out = [data["w_out"][node_id] for node_id in ids]
        w_in = [data["w_in"][node_id] for node_id in ids]
        g_data = data.get("g", {"values": [1.0]})
        g = g_data["values"]
    except (KeyError, TypeError) as e:
        raise InputValidationError(f"model file {path} is missing field {e}")
    bins_data = g_data.get("bins") or {"mode": "explicit", "count": 1, "edges": [1.0]}
    bins = BinSpec(mode=bins_data.get("mode", "explicit"), count=bins_data.get("count", len(g)),
                   edges=bins_data.get("edges"))
    params = ModelParams(w_out=w_out, w_in=w_in, g=g, node_ids=ids,
                         flagged_bins=tuple(g_data.get("flagged_bins", ())))
    hier = None
    if data.get("hierarchy_newick"):
        ladder = data.get("ladder") or ladder_from_newick(data["hierarchy_newick"])
        hier = from_newick(data["hierarchy_newick"], ladder, ids)
    return params, hier, bins, data


def report_to_dict(report: FitReport, cfg=None):
    out = {
        "schema": SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "objective": report.objective,
        "converged": report.converged,
        "sweeps": report.sweeps,
        "seed": report.seed,
        "trajectory": list(report.trajectory),
        "step_objectives": list(report.step_objectives),
        "prefit_objective": report.prefit_objective,
        "moves": [_move_row(move) for move in report.moves],
    }
    if cfg is not None:
        out["config"] = cfg.to_dict()
    return out


def write_report_json(report: FitReport, path, cfg=None):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report_to_dict(report, cfg), f, indent=2)
    return path


MOVE_LOG_COLUMNS = ["sweep", "level", "kind", "attach", "subtree", "target",
                    "old_level", "new_level", "gain", "objective"]


def _move_row(move):
    return {
        "sweep": move.sweep,
        "level": move.level,
        "kind": move.kind,
        "attach": move.attach or "",
        "subtree": " ".join(move.subtree),
        "target": " ".join(move.target),
        "old_level": move.old_level,
        "new_level": move.new_level,
        "gain": move.gain,
        "objective": move.objective,
    }


def write_move_log_csv(moves, path):
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=MOVE_LOG_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for move in moves:
            writer.writerow(_move_row(move))
    return path