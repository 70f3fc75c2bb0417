# hierarchy.py
"""
Ultrametric hierarchies stored as dendrograms.

Leaves are node indices 0..n-1; internal vertices carry merge heights taken
from a finite level ladder in (0, 1). The hierarchical distance h(a, b) is the
height of the lowest common ancestor of a and b, so the strong triangle
inequality h(a,b) <= max(h(a,c), h(b,c)) holds for every tree built here.
Vertices are numbered canonically (leaves first, then internal vertices by
ascending (height, smallest leaf)), which keeps every parent id above its
children's ids.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import adjusted_rand_score

from hierflow.data_structures import Partition, default_ladder, validate_ladder
from hierflow.exceptions import InputValidationError

logger = logging.getLogger(__name__)

LADDER_TOLERANCE = 1e-12


class UltrametricHierarchy:
    """Rooted dendrogram with strictly increasing merge heights"""

    def __init__(self, parent, height, n_leaves, ladder, node_ids=None):
        self.parent = np.array(parent, dtype=int)
        self.height = np.array(height, dtype=float)
        self.parent.flags.writeable = False
        self.height.flags.writeable = False
        self.n_leaves = int(n_leaves)
        self.ladder = validate_ladder(ladder)
        self.node_ids = tuple(node_ids) if node_ids is not None else None
        self._validate()

    def _validate(self):
        n, v_count = self.n_leaves, len(self.parent)
        if len(self.height) != v_count or v_count < n:
            raise InputValidationError("parent and height arrays are inconsistent")
        if self.node_ids is not None and len(self.node_ids) != n:
            raise InputValidationError("node ids do not match the number of leaves")
        if n == 0:
            return
        roots = np.flatnonzero(self.parent == -1)
        if len(roots) != 1:
            raise InputValidationError(f"hierarchy must have exactly one root, found {len(roots)}")
        if np.any(self.height[:n] != 0):
            raise InputValidationError("leaf heights must be 0")
        counts = np.bincount(self.parent[self.parent >= 0], minlength=v_count)
        if np.any(counts[n:] < 2):
            raise InputValidationError("every internal vertex needs at least two children")
        for v in range(v_count):
            p = self.parent[v]
            if p == -1:
                continue
            if p <= v or p >= v_count or p < n:
                raise InputValidationError(f"vertex {v} has invalid parent {p}")
            if not self.height[p] > self.height[v]:
                raise InputValidationError(
                    f"merge heights must increase towards the root (vertex {v}: "
                    f"{self.height[v]} under {self.height[p]})")
        ladder = np.asarray(self.ladder)
        for v in range(n, v_count):
            if np.min(np.abs(ladder - self.height[v])) > LADDER_TOLERANCE:
                raise InputValidationError(f"height {self.height[v]} of vertex {v} is not on the ladder")

    # construction helpers -------------------------------------------------

    @classmethod
    def from_links(cls, n_leaves, parent_of, height_of, ladder, node_ids=None):
        """
        Build a canonical hierarchy from vertex -> parent (None for the root) and
        internal vertex -> height maps. Internal vertex keys may be any ints >= n_leaves.
        """
        n = int(n_leaves)
        internal = [v for v in parent_of if v >= n]
        min_leaf = {}
        for leaf in range(n):
            v = parent_of.get(leaf)
            while v is not None:
                if v not in min_leaf or leaf < min_leaf[v]:
                    min_leaf[v] = leaf
                v = parent_of[v]
        order = sorted(internal, key=lambda v: (height_of[v], min_leaf.get(v, n)))
        new_id = {leaf: leaf for leaf in range(n)}
        for rank, v in enumerate(order):
            new_id[v] = n + rank
        parent = np.full(n + len(order), -1, dtype=int)
        height = np.zeros(n + len(order))
        for v, p in parent_of.items():
            parent[new_id[v]] = -1 if p is None else new_id[p]
        for v in order:
            height[new_id[v]] = height_of[v]
        return cls(parent, height, n, ladder, node_ids)

    def links(self):
        parent_of = {v: (None if p == -1 else int(p)) for v, p in enumerate(self.parent)}
        height_of = {v: float(self.height[v]) for v in range(self.n_leaves, len(self.parent))}
        return parent_of, height_of

    # structure ------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.parent)

    @property
    def root(self):
        if self.n_leaves == 0:
            return None
        return int(np.flatnonzero(self.parent == -1)[0])

    @property
    def internal_vertices(self):
        return range(self.n_leaves, self.n_vertices)

    @cached_property
    def children(self):
        kids = [[] for _ in range(self.n_vertices)]
        for v, p in enumerate(self.parent):
            if p >= 0:
                kids[p].append(v)
        return [tuple(k) for k in kids]

    @cached_property
    def leaves(self):
        """Sorted leaf index array under every vertex"""
        out = [None] * self.n_vertices
        for v in range(self.n_vertices):
            if v < self.n_leaves:
                out[v] = np.array([v], dtype=int)
            else:
                out[v] = np.sort(np.concatenate([out[c] for c in self.children[v]]))
        return out

    @cached_property
    def level_matrix(self):
        """Full pairwise h matrix (LCA heights), zero diagonal"""
        n = self.n_leaves
        levels = np.zeros((n, n))
        for v in self.internal_vertices:
            kids = self.children[v]
            for i, ci in enumerate(kids):
                for cj in kids[i + 1:]:
                    block = np.ix_(self.leaves[ci], self.leaves[cj])
                    levels[block] = self.height[v]
                    levels[block[::-1]] = self.height[v]
        levels.flags.writeable = False
        return levels

    def parent_height(self, v):
        p = self.parent[v]
        return None if p == -1 else float(self.height[p])

    def vertices_at(self, level):
        return [v for v in self.internal_vertices if abs(self.height[v] - level) <= LADDER_TOLERANCE]

    def index_of(self, node):
        if isinstance(node, (int, np.integer)):
            if 0 <= node < self.n_leaves:
                return int(node)
            raise InputValidationError(f"unknown node: {node}")
        if self.node_ids is not None and node in self.node_ids:
            return self.node_ids.index(node)
        raise InputValidationError(f"unknown node: {node}")

    def leaf_names(self, leaves):
        if self.node_ids is None:
            return tuple(str(int(leaf)) for leaf in leaves)
        return tuple(self.node_ids[int(leaf)] for leaf in leaves)

    # pure modifications ---------------------------------------------------

    def with_height(self, v, level):
        """Copy with internal vertex v moved to a new height"""
        if not self.n_leaves <= v < self.n_vertices:
            raise InputValidationError(f"vertex {v} is not an internal vertex")
        parent_of, height_of = self.links()
        height_of[v] = float(level)
        return UltrametricHierarchy.from_links(self.n_leaves, parent_of, height_of, self.ladder, self.node_ids)

    def relocate(self, s, t, attach, level=None):
        """
        Copy with the subtree rooted at s detached and re-attached at t.
        attach='join' makes s a child of internal vertex t; attach='insert' puts a
        new vertex at `level` above t with children s and t. A parent left with a
        single child by the detachment is removed.
        """
        if self.parent[s] == -1:
            raise InputValidationError("the root cannot be relocated")
        parent_of, height_of = self.links()
        p = parent_of[s]
        parent_of[s] = None
        remaining = [c for c in self.children[p] if c != s]
        if len(remaining) == 1:
            if t == p:
                raise InputValidationError(f"target {t} disappears when {s} is detached")
            parent_of[remaining[0]] = parent_of[p]
            del parent_of[p]
            del height_of[p]
        if attach == "join":
            if t < self.n_leaves:
                raise InputValidationError("join target must be an internal vertex")
            parent_of[s] = t
        elif attach == "insert":
            new = max(parent_of) + 1
            height_of[new] = float(level)
            parent_of[new] = parent_of[t]
            parent_of[t] = new
            parent_of[s] = new
        else:
            raise InputValidationError(f"unknown attach mode: {attach}")
        return UltrametricHierarchy.from_links(self.n_leaves, parent_of, height_of, self.ladder, self.node_ids)

    def __repr__(self):
        return (f"UltrametricHierarchy(n_leaves={self.n_leaves}, "
                f"internal={self.n_vertices - self.n_leaves}, levels={len(self.ladder)})")


@dataclass(frozen=True)
class UltrametricCheck:
    ok: bool
    triple: Optional[Tuple[int, int, int]] = None

    def __bool__(self):
        return self.ok


def level_matrix(hier: UltrametricHierarchy) -> np.ndarray:
    return hier.level_matrix


def h_of(hier: UltrametricHierarchy, a, b) -> float:
    """Hierarchical distance: height of the lowest common ancestor, 0 for a == b"""
    i, j = hier.index_of(a), hier.index_of(b)
    return float(hier.level_matrix[i, j])


def validate_ultrametric(h_values, tol=0.0) -> UltrametricCheck:
    """
    Check h(a,b) <= max(h(a,c), h(b,c)) for every triple. Reports the
    lexicographically smallest violating triple (sorted node indices).
    """
    h = np.asarray(h_values, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InputValidationError("level matrix must be square")
    if not np.array_equal(h, h.T):
        raise InputValidationError("level matrix must be symmetric")
    if np.any(np.diag(h) != 0):
        raise InputValidationError("level matrix must have a zero diagonal")
    n = h.shape[0]
    off = ~np.eye(n, dtype=bool)
    if np.any(h[off] <= 0):
        raise InputValidationError("off-diagonal levels must be positive")
    first = None
    for c in range(n):
        bound = np.maximum(h[:, c][:, np.newaxis], h[c, :][np.newaxis, :])
        bad = np.argwhere(h > bound + tol)
        for a, b in bad:
            triple = tuple(sorted((int(a), int(b), c)))
            if first is None or triple < first:
                first = triple
    if first is not None:
        return UltrametricCheck(ok=False, triple=first)
    return UltrametricCheck(ok=True)


def _labels_from_levels(levels, t):
    n = levels.shape[0]
    labels = np.full(n, -1, dtype=int)
    label = 0
    for a in range(n):
        if labels[a] >= 0:
            continue
        labels[(levels[a] <= t) & (labels < 0)] = label
        label += 1
    return labels


def cut_at_level(hier: UltrametricHierarchy, t: float) -> Partition:
    """
    Section of the hierarchy at level t: a and b share a community iff
    h(a,b) <= t. Labels are numbered from 0 by smallest contained node index.
    """
    if not 0.0 <= t <= 1.0:
        raise InputValidationError(f"cut level must lie in [0, 1], got {t}")
    labels = _labels_from_levels(hier.level_matrix, t)
    return Partition(labels=labels, level=float(t), exact=True, node_ids=hier.node_ids)


def cut_to_k(hier: UltrametricHierarchy, k: int) -> Partition:
    """
    Partition with exactly k communities from the largest such section. When
    tied heights make k unreachable, the section with the fewest communities
    above k is returned with exact=False.
    """
    n = hier.n_leaves
    if not 1 <= k <= n:
        raise InputValidationError(f"k must lie in [1, {n}], got {k}")
    candidates = [0.0] + sorted(set(float(h) for h in hier.height[n:]))
    exact, coarsest_finer = None, None
    for t in candidates:
        partition = cut_at_level(hier, t)
        count = partition.n_communities
        if count == k:
            exact = partition
        elif count > k:
            coarsest_finer = partition
    if exact is not None:
        return exact
    logger.warning(f"No section of the hierarchy has exactly {k} communities; "
                   f"returning {coarsest_finer.n_communities} at level {coarsest_finer.level}")
    return Partition(labels=coarsest_finer.labels, level=coarsest_finer.level,
                     exact=False, node_ids=coarsest_finer.node_ids)


def random_hierarchy(nodes: int, ladder: Sequence[float], seed: int,
                     node_ids=None, min_level: Optional[float] = None) -> UltrametricHierarchy:
    """
    Random valid hierarchy from recursive random binary splits.

    Heights are drawn from the ladder levels between `min_level` (the lowest
    level when None) and the parent's height, keeping enough levels below each
    vertex for a full binary split of its leaves. A subtree that lands on the
    floor level takes all of its leaves as direct children.
    """
    ladder = validate_ladder(ladder)
    rng = np.random.default_rng(seed)
    parent_of, height_of = {}, {}
    next_id = [nodes]
    floor_idx = 0
    if min_level is not None:
        above = [i for i, level in enumerate(ladder) if level >= min_level - LADDER_TOLERANCE]
        floor_idx = above[0] if above else len(ladder) - 1

    def build(leaves, upper):
        if len(leaves) == 1:
            return leaves[0]
        depth = int(np.ceil(np.log2(len(leaves))))
        lowest = max(floor_idx, min(floor_idx + depth - 1, upper - 1))
        idx = int(rng.integers(lowest, upper))
        v = next_id[0]
        next_id[0] += 1
        height_of[v] = ladder[idx]
        if idx == floor_idx:
            kids = list(leaves)
        else:
            shuffled = [int(x) for x in rng.permutation(leaves)]
            cut = int(rng.integers(1, len(leaves)))
            kids = [build(sorted(shuffled[:cut]), idx), build(sorted(shuffled[cut:]), idx)]
        for child in kids:
            parent_of[child] = v
        return v

    if nodes > 0:
        root = build(list(range(nodes)), len(ladder))
        parent_of[root] = None
    return UltrametricHierarchy.from_links(nodes, parent_of, height_of, ladder, node_ids)


def flat_hierarchy(nodes: int, level: float, ladder=None, node_ids=None) -> UltrametricHierarchy:
    """All distinct pairs at one level (a star under the root)"""
    ladder = tuple(ladder) if ladder is not None else (float(level),)
    parent_of, height_of = {}, {}
    if nodes == 1:
        parent_of[0] = None
    elif nodes > 1:
        root = nodes
        height_of[root] = float(level)
        parent_of[root] = None
        for leaf in range(nodes):
            parent_of[leaf] = root
    return UltrametricHierarchy.from_links(nodes, parent_of, height_of, ladder, node_ids)


def planted_hierarchy(nodes: int, k: int, within_level: float, between_level: float,
                      ladder=None, node_ids=None) -> UltrametricHierarchy:
    """
    k contiguous, nearly equal blocks merged internally at within_level and
    joined under a root at between_level.
    """
    if not 1 <= k <= nodes:
        raise InputValidationError(f"planted k must lie in [1, {nodes}], got {k}")
    if not within_level < between_level:
        raise InputValidationError("within-level must be below between-level")
    if ladder is None:
        ladder = (float(within_level), float(between_level))
    parent_of, height_of = {}, {}
    next_id = nodes
    if k == 1:
        return flat_hierarchy(nodes, within_level, ladder, node_ids)
    root = next_id
    next_id += 1
    height_of[root] = float(between_level)
    parent_of[root] = None
    for block in np.array_split(np.arange(nodes), k):
        if len(block) == 1:
            parent_of[int(block[0])] = root
            continue
        v = next_id
        next_id += 1
        height_of[v] = float(within_level)
        parent_of[v] = root
        for leaf in block:
            parent_of[int(leaf)] = v
    return UltrametricHierarchy.from_links(nodes, parent_of, height_of, ladder, node_ids)


def planted_partition(nodes: int, k: int, node_ids=None) -> Partition:
    labels = np.zeros(nodes, dtype=int)
    for label, block in enumerate(np.array_split(np.arange(nodes), k)):
        labels[block] = label
    return Partition(labels=labels, level=0.0, node_ids=node_ids)


def partition_agreement(p: Partition, q: Partition) -> float:
    """Adjusted Rand index between two partitions of the same node set"""
    if p.n != q.n:
        raise InputValidationError(f"partitions cover different node counts ({p.n} vs {q.n})")
    q_labels = q.labels
    if p.node_ids is not None and q.node_ids is not None:
        if set(p.node_ids) != set(q.node_ids):
            diff = sorted(set(p.node_ids) ^ set(q.node_ids))
            raise InputValidationError(f"partitions cover different node sets: {diff}")
        position = {node_id: i for i, node_id in enumerate(q.node_ids)}
        q_labels = np.array([q.labels[position[node_id]] for node_id in p.node_ids])
    return float(adjusted_rand_score(p.labels, q_labels))


__all__ = [
    "UltrametricHierarchy", "UltrametricCheck", "default_ladder", "level_matrix", "h_of",
    "validate_ultrametric", "cut_at_level", "cut_to_k", "random_hierarchy", "flat_hierarchy",
    "planted_hierarchy", "planted_partition", "partition_agreement",
]
