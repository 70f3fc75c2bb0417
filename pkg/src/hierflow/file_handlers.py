# file_handlers.py
"""
CSV ingestion and serialization for flow networks.

Formats (UTF-8, comma-delimited, header row):
    edges      origin,destination,weight
    nodes      id,label,lat,lon        (lat/lon optional)
    distances  id_a,id_b,km
"""
import os
import csv
import math
import logging
from typing import List, Optional, Sequence

import numpy as np

from hierflow.data_structures import FlowNetwork, NodeRecord
from hierflow.exceptions import EdgeListParseError, InputValidationError

logger = logging.getLogger(__name__)


def _open_csv(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Input file not found at: {path}")
    return open(path, "r", newline="", encoding="utf-8")


def _rows(reader, has_header):
    """Yield (line_number, row) for non-blank rows, skipping the header"""
    header_pending = has_header
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        if header_pending:
            header_pending = False
            continue
        yield reader.line_num, [cell.strip() for cell in row]


def _parse_float(text, what, line):
    try:
        value = float(text)
    except ValueError:
        raise EdgeListParseError(f"could not parse {what} '{text}'", line=line)
    if not math.isfinite(value):
        raise InputValidationError(f"{what} must be finite, got '{text}'", line=line)
    return value


def parse_edge_csv(path, delimiter=",", has_header=True) -> FlowNetwork:
    """
    Read an edge list into a FlowNetwork. Nodes are registered in order of
    first appearance; absent pairs have flow 0.

    Raises:
        FileNotFoundError: missing file
        EdgeListParseError: malformed row (reported with its line number)
        InputValidationError: negative weight or duplicate (origin, destination) pair
    """
    index = {}
    entries = {}
    with _open_csv(path) as f:
        reader = csv.reader(f, delimiter=delimiter)
        for line, row in _rows(reader, has_header):
            if len(row) != 3:
                raise EdgeListParseError(
                    f"expected 3 columns (origin, destination, weight), got {len(row)}", line=line)
            origin, destination, weight_text = row
            if not origin or not destination:
                raise EdgeListParseError("empty node id", line=line)
            weight = _parse_float(weight_text, "weight", line)
            if weight < 0:
                raise InputValidationError(
                    f"negative weight {weight} for pair ({origin}, {destination})", line=line)
            if (origin, destination) in entries:
                raise InputValidationError(
                    f"duplicate pair ({origin}, {destination})", line=line)
            for node_id in (origin, destination):
                if node_id not in index:
                    index[node_id] = len(index)
            entries[(origin, destination)] = weight

    n = len(index)
    flows = np.zeros((n, n))
    for (origin, destination), weight in entries.items():
        flows[index[origin], index[destination]] = weight
    nodes = tuple(NodeRecord(id=node_id, label=node_id) for node_id in index)
    logger.info(f"Parsed {len(entries)} edges over {n} nodes from {path}")
    return FlowNetwork(nodes=nodes, flows=flows)


def parse_nodes_csv(path, delimiter=",", has_header=True) -> List[NodeRecord]:
    """Read node records (id, label, lat, lon) in file order; lat/lon may be absent"""
    records = []
    seen = set()
    with _open_csv(path) as f:
        reader = csv.reader(f, delimiter=delimiter)
        for line, row in _rows(reader, has_header):
            if len(row) not in (1, 2, 3, 4):
                raise EdgeListParseError(
                    f"expected up to 4 columns (id, label, lat, lon), got {len(row)}", line=line)
            row = row + [""] * (4 - len(row))
            node_id, label, lat_text, lon_text = row
            if not node_id:
                raise EdgeListParseError("empty node id", line=line)
            if node_id in seen:
                raise InputValidationError(f"duplicate node id {node_id}", line=line)
            seen.add(node_id)
            coordinate = None
            if lat_text or lon_text:
                if not (lat_text and lon_text):
                    raise EdgeListParseError(
                        f"node {node_id} has only one of lat/lon", line=line)
                coordinate = (_parse_float(lat_text, "latitude", line),
                              _parse_float(lon_text, "longitude", line))
            try:
                records.append(NodeRecord(id=node_id, label=label or node_id, coordinate=coordinate))
            except InputValidationError as e:
                raise InputValidationError(str(e), line=line)
    logger.info(f"Parsed {len(records)} node records from {path}")
    return records


def attach_nodes(net: FlowNetwork, records: Sequence[NodeRecord]) -> FlowNetwork:
    """
    Attach labels and coordinates to a network by node id. Node-file ids with
    no edges are appended as isolated nodes.
    """
    by_id = {record.id: record for record in records}
    missing = [node_id for node_id in net.node_ids if node_id not in by_id]
    if missing:
        raise InputValidationError(f"nodes referenced by edges but missing from node file: {missing}")
    extra = [record for record in records if record.id not in set(net.node_ids)]
    nodes = tuple(by_id[node_id] for node_id in net.node_ids) + tuple(extra)
    flows = np.zeros((len(nodes), len(nodes)))
    flows[:net.n, :net.n] = net.flows
    if extra:
        logger.info(f"Added {len(extra)} isolated nodes from node file")
    return FlowNetwork(nodes=nodes, flows=flows, directed=net.directed)


def reorder_network(net: FlowNetwork, node_ids: Sequence[str]) -> FlowNetwork:
    """Same network with nodes in the given id order; the id sets must agree"""
    node_ids = tuple(node_ids)
    if set(node_ids) != set(net.node_ids) or len(node_ids) != net.n:
        diff = sorted(set(node_ids) ^ set(net.node_ids))
        raise InputValidationError(f"node sets differ: {diff}")
    order = [net.index_of(node_id) for node_id in node_ids]
    return FlowNetwork(nodes=tuple(net.nodes[i] for i in order),
                       flows=net.flows[np.ix_(order, order)], directed=net.directed)


def parse_distance_csv(path, net: FlowNetwork, delimiter=",", has_header=True) -> np.ndarray:
    """
    Read an explicit pairwise distance override (id_a, id_b, km). Each row sets
    both directions; every distinct pair must be present.
    """
    n = net.n
    index = {node_id: i for i, node_id in enumerate(net.node_ids)}
    values = np.full((n, n), np.nan)
    np.fill_diagonal(values, 0.0)
    with _open_csv(path) as f:
        reader = csv.reader(f, delimiter=delimiter)
        for line, row in _rows(reader, has_header):
            if len(row) != 3:
                raise EdgeListParseError(
                    f"expected 3 columns (id_a, id_b, km), got {len(row)}", line=line)
            id_a, id_b, km_text = row
            for node_id in (id_a, id_b):
                if node_id not in index:
                    raise InputValidationError(f"unknown node {node_id} in distance file", line=line)
            km = _parse_float(km_text, "distance", line)
            if km < 0:
                raise InputValidationError(f"negative distance {km} for ({id_a}, {id_b})", line=line)
            a, b = index[id_a], index[id_b]
            if a == b:
                if km != 0:
                    raise InputValidationError(f"non-zero self distance for {id_a}", line=line)
                continue
            if not np.isnan(values[a, b]) and values[a, b] != km:
                raise InputValidationError(
                    f"conflicting distances for ({id_a}, {id_b}): {values[a, b]} vs {km}", line=line)
            values[a, b] = values[b, a] = km
    if np.isnan(values).any():
        a, b = np.argwhere(np.isnan(values))[0]
        raise InputValidationError(
            f"distance file has no entry for pair ({net.nodes[a].id}, {net.nodes[b].id})")
    return values


def write_edge_csv(net: FlowNetwork, path, include_zeros=True):
    """
    Write the network as an edge list in (origin, destination) index order.
    With include_zeros every ordered off-diagonal pair is written, so re-parsing
    reproduces both the node order and the flow matrix.
    """
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile, lineterminator="\n")
        writer.writerow(["origin", "destination", "weight"])
        for a in range(net.n):
            for b in range(net.n):
                weight = net.flows[a, b]
                if a == b and not (weight > 0 or net.n == 1):
                    continue
                if a != b and weight == 0 and not include_zeros:
                    continue
                writer.writerow([net.nodes[a].id, net.nodes[b].id, _format_weight(weight)])
    logger.info(f"Wrote edge list for {net.n} nodes to {path}")
    return path


def _format_weight(weight):
    weight = float(weight)
    if weight.is_integer():
        return str(int(weight))
    return repr(weight)


def load_network(edges_path, nodes_path: Optional[str] = None) -> FlowNetwork:
    """Edge list plus optional node file, the usual CLI input pair"""
    net = parse_edge_csv(edges_path)
    if nodes_path:
        net = attach_nodes(net, parse_nodes_csv(nodes_path))
    return net
