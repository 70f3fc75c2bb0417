# test_graph_core.py
"""
Tests for network ingestion, great-circle distances and distance binning
"""
import os
import sys
import math

import numpy as np
import pytest

# Add src to path to import our modules
src_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "src")
if src_path not in sys.path:
    sys.path.insert(0, src_path)

from hierflow.data_structures import BinSpec, FlowNetwork, NodeRecord
from hierflow.exceptions import EdgeListParseError, InputValidationError
from hierflow.file_handlers import (attach_nodes, load_network, parse_distance_csv, parse_edge_csv,
                                    parse_nodes_csv, reorder_network, write_edge_csv)
from hierflow.geo_utils import (build_distance_matrix, great_circle_distance, pairwise_great_circle,
                                unit_distance_matrix)

ASSETS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "assets")
MIGRATION_NODES = os.path.join(ASSETS, "migration_states", "nodes.csv")
NEW_YORK = (40.7128, -74.0060)
LOS_ANGELES = (34.0522, -118.2437)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# edge lists ---------------------------------------------------------------

def test_single_row_edge_list(tmp_path):
    net = parse_edge_csv(_write(tmp_path, "e.csv", "origin,destination,weight\nA,B,5\n"))
    assert net.node_ids == ("A", "B")
    assert net.flows[0, 1] == 5
    assert net.flows[1, 0] == 0


def test_header_only_edge_list_is_empty(tmp_path):
    net = parse_edge_csv(_write(tmp_path, "e.csv", "origin,destination,weight\n"))
    assert net.n == 0
    assert net.flows.shape == (0, 0)


def test_negative_weight_rejected(tmp_path):
    with pytest.raises(InputValidationError):
        parse_edge_csv(_write(tmp_path, "e.csv", "origin,destination,weight\nA,B,-1\n"))


def test_duplicate_pair_rejected(tmp_path):
    text = "origin,destination,weight\nA,B,1\nB,A,2\nA,B,3\n"
    with pytest.raises(InputValidationError) as info:
        parse_edge_csv(_write(tmp_path, "e.csv", text))
    assert info.value.line == 4


def test_malformed_row_reports_line_number(tmp_path):
    text = "origin,destination,weight\nA,B,1\nA,C\n"
    with pytest.raises(EdgeListParseError) as info:
        parse_edge_csv(_write(tmp_path, "e.csv", text))
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_unparseable_weight(tmp_path):
    with pytest.raises(EdgeListParseError):
        parse_edge_csv(_write(tmp_path, "e.csv", "origin,destination,weight\nA,B,lots\n"))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        parse_edge_csv("/nonexistent/edges.csv")


def _state_network(flows=None):
    records = tuple(parse_nodes_csv(MIGRATION_NODES))
    n = len(records)
    return FlowNetwork(nodes=records, flows=np.zeros((n, n)) if flows is None else flows)


def test_edge_list_round_trip(tmp_path):
    flows = np.random.default_rng(7).poisson(400.0, size=(20, 20)).astype(float)
    np.fill_diagonal(flows, 0.0)
    source = write_edge_csv(_state_network(flows), str(tmp_path / "states.csv"))
    net = parse_edge_csv(source)
    assert net.node_ids == _state_network().node_ids
    copy_path = write_edge_csv(net, str(tmp_path / "copy.csv"))
    again = parse_edge_csv(copy_path)
    assert again.node_ids == net.node_ids
    assert np.array_equal(again.flows, net.flows)


def test_load_network_attaches_state_coordinates(tmp_path):
    flows = np.random.default_rng(8).poisson(50.0, size=(20, 20)).astype(float)
    np.fill_diagonal(flows, 0.0)
    edges = write_edge_csv(_state_network(flows), str(tmp_path / "states.csv"))
    net = load_network(edges, MIGRATION_NODES)
    assert net.n == 20
    assert all(node.coordinate is not None for node in net.nodes)
    assert net.nodes[0].label == "New York"


def test_round_trip_keeps_zero_pairs_and_order(tmp_path):
    text = "origin,destination,weight\nC,A,2.5\nA,B,1\n"
    net = parse_edge_csv(_write(tmp_path, "e.csv", text))
    again = parse_edge_csv(write_edge_csv(net, str(tmp_path / "w.csv")))
    assert again.node_ids == ("C", "A", "B")
    assert np.array_equal(again.flows, net.flows)


# node files ---------------------------------------------------------------

def test_parse_nodes(tmp_path):
    text = "id,label,lat,lon\nNY,New York,40.7128,-74.0060\nB,Bee\n"
    records = parse_nodes_csv(_write(tmp_path, "n.csv", text))
    assert records[0].coordinate == NEW_YORK
    assert records[0].label == "New York"
    assert records[1].coordinate is None


def test_latitude_out_of_range(tmp_path):
    with pytest.raises(InputValidationError):
        parse_nodes_csv(_write(tmp_path, "n.csv", "id,label,lat,lon\nX,Bad,95,0\n"))


def test_duplicate_node_id(tmp_path):
    with pytest.raises(InputValidationError):
        parse_nodes_csv(_write(tmp_path, "n.csv", "id,label,lat,lon\nA,a,1,1\nA,b,2,2\n"))


def test_attach_nodes_adds_isolated_and_rejects_missing(tmp_path):
    net = parse_edge_csv(_write(tmp_path, "e.csv", "origin,destination,weight\nA,B,5\n"))
    records = [NodeRecord("A", "a", (1.0, 1.0)), NodeRecord("B", "b", (2.0, 2.0)), NodeRecord("C", "c", (3.0, 3.0))]
    attached = attach_nodes(net, records)
    assert attached.node_ids == ("A", "B", "C")
    assert attached.flows[0, 1] == 5
    assert attached.flows[2].sum() == 0
    with pytest.raises(InputValidationError):
        attach_nodes(net, records[:1])


def test_reorder_network():
    net = FlowNetwork(nodes=(NodeRecord("A"), NodeRecord("B")), flows=[[0, 3], [1, 0]])
    swapped = reorder_network(net, ("B", "A"))
    assert swapped.flows[0, 1] == 1
    assert swapped.flows[1, 0] == 3
    with pytest.raises(InputValidationError):
        reorder_network(net, ("A", "C"))


def test_flow_network_invariants():
    with pytest.raises(InputValidationError):
        FlowNetwork(nodes=(NodeRecord("A"), NodeRecord("B")), flows=[[0, -1], [0, 0]])
    with pytest.raises(InputValidationError):
        FlowNetwork(nodes=(NodeRecord("A"), NodeRecord("A")), flows=np.zeros((2, 2)))
    with pytest.raises(InputValidationError):
        FlowNetwork(nodes=(NodeRecord("A"),), flows=np.zeros((2, 2)))


# distances ----------------------------------------------------------------

def _cosine_law_km(p, q, radius=6371.0088):
    lat1, lon1, lat2, lon2 = map(math.radians, (p[0], p[1], q[0], q[1]))
    cos_angle = (math.sin(lat1) * math.sin(lat2)
                 + math.cos(lat1) * math.cos(lat2) * math.cos(lon2 - lon1))
    return radius * math.acos(max(-1.0, min(1.0, cos_angle)))


def test_great_circle_identity():
    assert great_circle_distance(NEW_YORK, NEW_YORK) == 0.0


def test_great_circle_new_york_los_angeles():
    d = great_circle_distance(NEW_YORK, LOS_ANGELES)
    assert 3930.0 < d < 3940.0
    assert d == pytest.approx(_cosine_law_km(NEW_YORK, LOS_ANGELES), rel=1e-9)


def test_great_circle_antipode():
    assert great_circle_distance((0.0, 0.0), (0.0, 180.0)) == pytest.approx(math.pi * 6371.0088, rel=1e-12)


def test_great_circle_metric_properties():
    rng = np.random.default_rng(7)
    for _ in range(200):
        p, q, r = [(rng.uniform(-90, 90), rng.uniform(-180, 180)) for _ in range(3)]
        pq, qp = great_circle_distance(p, q), great_circle_distance(q, p)
        assert pq == pytest.approx(qp, abs=1e-9)
        assert pq <= great_circle_distance(p, r) + great_circle_distance(r, q) + 1e-6


def test_pairwise_matches_scalar():
    coords = [NEW_YORK, LOS_ANGELES, (41.8781, -87.6298)]
    matrix = pairwise_great_circle(coords)
    assert np.allclose(matrix, matrix.T)
    assert np.all(np.diag(matrix) == 0)
    assert matrix[0, 1] == pytest.approx(great_circle_distance(NEW_YORK, LOS_ANGELES), rel=1e-12)


def _spatial_net(coords):
    nodes = tuple(NodeRecord(f"v{i}", f"v{i}", c) for i, c in enumerate(coords))
    return FlowNetwork(nodes=nodes, flows=np.zeros((len(coords), len(coords))))


def test_same_point_single_linear_bin():
    net = _spatial_net([NEW_YORK, NEW_YORK])
    dist = build_distance_matrix(net, BinSpec.linear(1, lo=0.0, hi=100.0))
    assert dist.bin_index[0, 1] == 0 and dist.bin_index[1, 0] == 0
    assert dist.bin_index[0, 0] == -1


def test_explicit_edges_lookup():
    spec = BinSpec.explicit((100.0, 1000.0))
    assert list(spec.assign([50.0, 100.0, 500.0, 1000.0])) == [0, 0, 1, 1]
    with pytest.raises(InputValidationError):
        spec.assign([1500.0])


def test_explicit_edges_overflow_in_matrix():
    net = _spatial_net([NEW_YORK, LOS_ANGELES])
    with pytest.raises(InputValidationError):
        build_distance_matrix(net, BinSpec.explicit((100.0, 1000.0)))


def test_log_bins_cover_all_pairs():
    net = _state_network()
    dist = build_distance_matrix(net, BinSpec.logarithmic(12))
    off = ~np.eye(net.n, dtype=bool)
    assert dist.n_bins == 12
    assert dist.bin_index[off].min() == 0
    assert dist.bin_index[off].max() == 11
    assert np.array_equal(dist.bin_index, dist.bin_index.T)


def test_missing_coordinates_need_distance_file(tmp_path):
    net = FlowNetwork(nodes=(NodeRecord("A"), NodeRecord("B")), flows=[[0, 1], [1, 0]])
    with pytest.raises(InputValidationError):
        build_distance_matrix(net, BinSpec.logarithmic(4))
    path = _write(tmp_path, "d.csv", "id_a,id_b,km\nA,B,250\n")
    dist = build_distance_matrix(net, BinSpec.linear(2, lo=0.0, hi=500.0), parse_distance_csv(path, net))
    assert dist.values[0, 1] == dist.values[1, 0] == 250.0
    assert dist.bin_index[0, 1] == 0


def test_distance_file_errors(tmp_path):
    net = FlowNetwork(nodes=(NodeRecord("A"), NodeRecord("B"), NodeRecord("C")), flows=np.zeros((3, 3)))
    with pytest.raises(InputValidationError):
        parse_distance_csv(_write(tmp_path, "d1.csv", "id_a,id_b,km\nA,B,1\nA,C,2\n"), net)
    with pytest.raises(InputValidationError):
        parse_distance_csv(_write(tmp_path, "d2.csv", "id_a,id_b,km\nA,B,1\nA,Z,2\n"), net)
    with pytest.raises(InputValidationError):
        parse_distance_csv(_write(tmp_path, "d3.csv", "id_a,id_b,km\nA,B,1\nB,A,2\nA,C,1\nB,C,1\n"), net)


def test_generic_unit_distances():
    net = FlowNetwork(nodes=(NodeRecord("A"), NodeRecord("B"), NodeRecord("C")), flows=np.zeros((3, 3)))
    dist = unit_distance_matrix(net)
    off = ~np.eye(3, dtype=bool)
    assert dist.n_bins == 1
    assert np.all(dist.bin_index[off] == 0)
    assert np.all(dist.values[off] == 1.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
