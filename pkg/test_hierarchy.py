# test_hierarchy.py
"""
Tests for ultrametric hierarchies, sections (cuts) and partition agreement
"""
import os
import sys
import itertools

import networkx as nx
import numpy as np
import pytest

# Add src to path to import our modules
src_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "src")
if src_path not in sys.path:
    sys.path.insert(0, src_path)

from hierflow.data_structures import Partition, default_ladder
from hierflow.exceptions import InputValidationError
from hierflow.hierarchy import (UltrametricHierarchy, cut_at_level, cut_to_k, flat_hierarchy, h_of,
                                partition_agreement, planted_hierarchy, planted_partition, random_hierarchy,
                                validate_ultrametric)


def three_leaf_tree(ladder=(0.3, 0.7)):
    """{a,b} merged at 0.3, c joins at 0.7"""
    return UltrametricHierarchy.from_links(
        3, {0: 3, 1: 3, 2: 4, 3: 4, 4: None}, {3: 0.3, 4: 0.7}, ladder, node_ids=("a", "b", "c"))


# h and validation ------------------------------------------------------------

def test_h_of_three_leaf_tree():
    hier = three_leaf_tree()
    assert h_of(hier, "a", "a") == 0.0
    assert h_of(hier, "a", "b") == 0.3
    assert h_of(hier, "a", "c") == 0.7
    assert h_of(hier, "b", "c") == h_of(hier, "a", "c")
    with pytest.raises(InputValidationError):
        h_of(hier, "a", "z")


def test_validate_two_largest_equal_is_ok():
    h = np.array([[0, 0.2, 0.5], [0.2, 0, 0.5], [0.5, 0.5, 0]])
    assert validate_ultrametric(h).ok


def test_validate_all_different_triple_fails():
    h = np.array([[0, 0.2, 0.3], [0.2, 0, 0.5], [0.3, 0.5, 0]])
    check = validate_ultrametric(h)
    assert not check
    assert check.triple == (0, 1, 2)


def test_validate_single_pair():
    assert validate_ultrametric(np.array([[0, 0.4], [0.4, 0]]))


def test_validate_rejects_bad_matrices():
    with pytest.raises(InputValidationError):
        validate_ultrametric(np.array([[0, 0.2], [0.3, 0]]))
    with pytest.raises(InputValidationError):
        validate_ultrametric(np.array([[0.1, 0.2], [0.2, 0]]))


def test_invalid_trees_rejected():
    with pytest.raises(InputValidationError):
        # child above its parent
        UltrametricHierarchy([2, 2, 3, -1], [0, 0, 0.7, 0.3], 2, (0.3, 0.7))
    with pytest.raises(InputValidationError):
        # height off the ladder
        UltrametricHierarchy([2, 2, -1], [0, 0, 0.4], 2, (0.3, 0.7))
    with pytest.raises(InputValidationError):
        # internal vertex with a single child
        UltrametricHierarchy([2, 3, 3, -1], [0, 0, 0.3, 0.7], 2, (0.3, 0.7))


def test_random_hierarchies_are_ultrametric():
    ladder = default_ladder(10)
    for seed in range(1000):
        n = 1 + seed % 12
        hier = random_hierarchy(n, ladder, seed)
        assert hier.n_leaves == n
        if n > 1:
            assert validate_ultrametric(hier.level_matrix)


def test_every_triple_has_two_largest_equal():
    hier = random_hierarchy(9, default_ladder(10), seed=3)
    h = hier.level_matrix
    for a, b, c in itertools.combinations(range(9), 3):
        values = sorted((h[a, b], h[a, c], h[b, c]))
        assert values[1] == values[2]


def test_random_hierarchy_small_and_deterministic():
    ladder = default_ladder(10)
    single = random_hierarchy(1, ladder, 0)
    assert single.n_vertices == 1
    pair = random_hierarchy(2, ladder, 0)
    assert pair.n_vertices == 3
    assert pair.height[2] in ladder
    first, second = random_hierarchy(7, ladder, 42), random_hierarchy(7, ladder, 42)
    assert np.array_equal(first.parent, second.parent)
    assert np.array_equal(first.height, second.height)


def test_random_hierarchy_uses_every_level():
    ladder = default_ladder(10)
    used = set()
    for seed in range(300):
        used.update(float(h) for h in random_hierarchy(5, ladder, seed).height[5:])
    assert used == set(ladder)


def test_random_hierarchy_respects_floor_level():
    ladder = default_ladder(10)
    floor = ladder[4]
    for seed in range(200):
        n = 2 + seed % 19
        hier = random_hierarchy(n, ladder, seed, min_level=floor)
        assert np.all(hier.height[n:] >= floor - 1e-12)
        assert validate_ultrametric(hier.level_matrix)


def test_random_hierarchy_splits_large_sets_above_floor():
    ladder = default_ladder(10)
    for seed in range(50):
        hier = random_hierarchy(16, ladder, seed, min_level=ladder[4])
        root = hier.root
        assert len(hier.children[root]) == 2
        assert hier.height[root] >= ladder[7] - 1e-12


def test_random_hierarchy_needs_ladder():
    with pytest.raises(InputValidationError):
        random_hierarchy(3, (), 0)


# cuts ------------------------------------------------------------------------

def test_cut_three_leaf_tree():
    hier = three_leaf_tree()
    assert list(cut_at_level(hier, 1.0).labels) == [0, 0, 0]
    assert list(cut_at_level(hier, 0.0).labels) == [0, 1, 2]
    assert list(cut_at_level(hier, 0.5).labels) == [0, 0, 1]
    assert list(cut_to_k(hier, 2).labels) == [0, 0, 1]
    assert list(cut_to_k(hier, 1).labels) == [0, 0, 0]
    assert list(cut_to_k(hier, 3).labels) == [0, 1, 2]


def test_cut_level_out_of_range():
    with pytest.raises(InputValidationError):
        cut_at_level(three_leaf_tree(), 1.5)
    with pytest.raises(InputValidationError):
        cut_to_k(three_leaf_tree(), 4)


def _components(h, t):
    graph = nx.Graph()
    graph.add_nodes_from(range(h.shape[0]))
    graph.add_edges_from((a, b) for a, b in itertools.combinations(range(h.shape[0]), 2) if h[a, b] <= t)
    return sorted(sorted(c) for c in nx.connected_components(graph))


def test_cut_matches_connected_components():
    ladder = default_ladder(6)
    for seed in range(40):
        hier = random_hierarchy(8, ladder, seed)
        for t in (0.0,) + ladder + (1.0,):
            partition = cut_at_level(hier, t)
            ours = sorted(sorted(int(x) for x in c) for c in partition.communities())
            assert ours == _components(hier.level_matrix, t)


def test_cuts_are_nested():
    ladder = default_ladder(10)
    hier = random_hierarchy(12, ladder, 5)
    partitions = [cut_at_level(hier, t) for t in (0.0,) + ladder]
    for finer, coarser in zip(partitions, partitions[1:]):
        assert finer.refines(coarser)


def test_labels_ordered_by_smallest_member():
    hier = UltrametricHierarchy.from_links(
        4, {0: 5, 3: 5, 1: 4, 2: 4, 4: 6, 5: 6, 6: None}, {4: 0.2, 5: 0.3, 6: 0.8}, (0.2, 0.3, 0.8))
    assert list(cut_at_level(hier, 0.5).labels) == [0, 1, 1, 0]


def test_cut_to_k_unreachable_is_flagged():
    hier = flat_hierarchy(4, 0.5)
    partition = cut_to_k(hier, 2)
    assert not partition.exact
    assert partition.n_communities == 4


# planted instances and agreement ---------------------------------------------

def test_planted_hierarchy_blocks():
    hier = planted_hierarchy(8, 2, 1 / 11, 6 / 11)
    assert h_of(hier, 0, 3) == pytest.approx(1 / 11)
    assert h_of(hier, 3, 4) == pytest.approx(6 / 11)
    truth = planted_partition(8, 2)
    assert partition_agreement(cut_to_k(hier, 2), truth) == 1.0


def test_agreement_identity_and_permutation():
    p = Partition(labels=[0, 0, 1, 1, 2], level=0.0)
    permuted = Partition(labels=[2, 2, 0, 0, 1], level=0.0)
    assert partition_agreement(p, p) == 1.0
    assert partition_agreement(p, permuted) == 1.0


def test_agreement_singletons_against_one_block():
    singletons = Partition(labels=[0, 1, 2, 3], level=0.0)
    together = Partition(labels=[0, 0, 0, 0], level=1.0)
    assert partition_agreement(singletons, together) == pytest.approx(0.0, abs=1e-12)


def test_agreement_aligns_node_ids():
    p = Partition(labels=[0, 0, 1], level=0.0, node_ids=("a", "b", "c"))
    q = Partition(labels=[1, 0, 0], level=0.0, node_ids=("c", "a", "b"))
    assert partition_agreement(p, q) == 1.0
    r = Partition(labels=[0, 0, 1], level=0.0, node_ids=("a", "b", "z"))
    with pytest.raises(InputValidationError):
        partition_agreement(p, r)


# pure modifications ----------------------------------------------------------

def test_relocate_insert_and_join():
    hier = three_leaf_tree(ladder=(0.1, 0.3, 0.7))
    inserted = hier.relocate(2, 0, "insert", 0.1)
    assert h_of(inserted, "a", "c") == 0.1
    assert h_of(inserted, "b", "c") == 0.3
    assert inserted.node_ids == ("a", "b", "c")
    joined = hier.relocate(2, 3, "join")
    assert joined.n_vertices == 4
    assert h_of(joined, "a", "c") == h_of(joined, "b", "c") == 0.3
    # the original is untouched
    assert h_of(hier, "a", "c") == 0.7


def test_with_height():
    hier = three_leaf_tree(ladder=(0.1, 0.3, 0.7, 0.9))
    raised = hier.with_height(4, 0.9)
    assert h_of(raised, "a", "c") == 0.9
    with pytest.raises(InputValidationError):
        hier.with_height(4, 0.1)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
