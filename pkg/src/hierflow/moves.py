# moves.py
"""
Hierarchy moves for the greedy search.

Two kinds of change keep a dendrogram valid by construction:
    reheight  - move an internal vertex to another level strictly between its
                tallest child and its parent
    relocate  - detach a subtree and re-attach it elsewhere, either as a new
                child of an internal vertex ('join') or under a new vertex
                inserted above the target ('insert')
Gains are evaluated incrementally on an immutable snapshot: only pairs whose
level changes are re-scored.
"""
import logging
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import List, Optional, Tuple

import numpy as np

from config import PARALLEL_MIN_CANDIDATES
from hierflow.model import base_matrix, pair_terms

logger = logging.getLogger(__name__)

LEVEL_TOLERANCE = 1e-12
KIND_RANK = {"reheight": 0, "relocate": 1}
ATTACH_RANK = {None: 0, "join": 1, "insert": 2}


@dataclass(frozen=True)
class Move:
    kind: str
    level: float
    vertex: int
    target: int = -1
    attach: Optional[str] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    key: Tuple = field(default=(), compare=False)


@dataclass(frozen=True)
class ScoredMove:
    move: Move
    gain: float
    new_level: Optional[float]


@dataclass
class MoveContext:
    """Snapshot of everything a gain evaluation reads"""
    observed: np.ndarray
    base: np.ndarray
    levels: np.ndarray
    heights: np.ndarray
    leaves: list
    ladder: np.ndarray
    kind: str

    @classmethod
    def build(cls, net, params, hier, dist, kind):
        return cls(observed=np.asarray(net.flows, dtype=float),
                   base=base_matrix(params, dist),
                   levels=np.asarray(hier.level_matrix),
                   heights=np.asarray(hier.height),
                   leaves=hier.leaves,
                   ladder=np.asarray(hier.ladder),
                   kind=kind)


def ladder_bounds(ladder, lower, upper):
    """Smallest and largest ladder level strictly inside (lower, upper), or (None, None)"""
    ladder = np.asarray(ladder)
    inside = ladder[(ladder > lower + LEVEL_TOLERANCE) & (ladder < upper - LEVEL_TOLERANCE)]
    if inside.size == 0:
        return None, None
    return float(inside.min()), float(inside.max())


def optimal_deterrence(observed, base, kind):
    """
    Closed-form best common f for a set of pairs with fixed w_out*w_in*g:
    sqrt(sum(A^2/c) / sum(c)) for poisson-normal, sum(A*c)/sum(c^2) for least squares.
    """
    observed = np.asarray(observed, dtype=float)
    base = np.asarray(base, dtype=float)
    if kind == "poisson-normal":
        denominator = base.sum()
        if denominator <= 0:
            return None
        positive = base > 0
        numerator = (observed[positive] ** 2 / base[positive]).sum()
        return float(np.sqrt(numerator / denominator))
    denominator = (base ** 2).sum()
    if denominator <= 0:
        return None
    return float(max((observed * base).sum() / denominator, 0.0))


def restricted_objective(observed, base, level, kind):
    return float(pair_terms(observed, base * (1.0 / level - 1.0), kind).sum())


def best_ladder_level(observed, base, lo, hi, ladder, kind):
    """
    Ladder level in [lo, hi] minimising the restricted objective. The closed-form
    optimum h* = 1/(1 + f*) is clamped into the bounds; the objective is unimodal
    in h, so the answer is one of the ladder levels bracketing h*.
    Returns None when no ladder level lies inside the bounds.
    """
    ladder = np.asarray(ladder)
    levels = ladder[(ladder >= lo - LEVEL_TOLERANCE) & (ladder <= hi + LEVEL_TOLERANCE)]
    if levels.size == 0:
        return None
    f_star = optimal_deterrence(observed, base, kind)
    if f_star is None:
        return None
    h_star = min(max(1.0 / (1.0 + f_star), lo), hi)
    options = []
    below = levels[levels <= h_star]
    above = levels[levels >= h_star]
    if below.size:
        options.append(float(below.max()))
    if above.size and float(above.min()) not in options:
        options.append(float(above.min()))
    scored = [(restricted_objective(observed, base, level, kind), level) for level in options]
    return min(scored)[1]


def _move_key(hier, kind, level, vertex, target=-1, attach=None):
    target_leaf = int(hier.leaves[target][0]) if target >= 0 else -1
    return (float(level), int(hier.leaves[vertex][0]), KIND_RANK[kind], target_leaf, ATTACH_RANK[attach])


def _is_descendant(parent, v, ancestor):
    while v != -1:
        if v == ancestor:
            return True
        v = parent[v]
    return False


def _relocations(hier, s, level):
    parent, height = hier.parent, hier.height
    p = parent[s]
    siblings = [c for c in hier.children[p] if c != s]
    collapses = len(siblings) == 1
    moves = []
    for t in range(hier.n_vertices):
        if _is_descendant(parent, t, s):
            continue
        if collapses and t == p:
            continue
        pt = parent[t]
        if collapses and pt == p:
            pt = parent[p]
        upper = height[pt] if pt != -1 else np.inf
        # re-inserting above the lone sibling only re-heights p
        if not (collapses and t == siblings[0]):
            lo, hi = ladder_bounds(hier.ladder, max(height[s], height[t]), upper)
            if lo is not None:
                moves.append(Move("relocate", level, s, t, "insert", lo, hi,
                                  key=_move_key(hier, "relocate", level, s, t, "insert")))
        if t >= hier.n_leaves and t != p and height[t] > height[s]:
            moves.append(Move("relocate", level, s, t, "join", float(height[t]), float(height[t]),
                              key=_move_key(hier, "relocate", level, s, t, "join")))
    return moves


def enumerate_moves(hier, level) -> List[Move]:
    """
    Candidate moves at level H: re-heighting every vertex at H and relocating
    every subtree whose parent sits at H. Every move maps a valid hierarchy to
    a valid hierarchy.
    """
    moves = []
    at_level = hier.vertices_at(level)
    for v in at_level:
        lower = max(hier.height[c] for c in hier.children[v])
        upper = hier.parent_height(v)
        lo, hi = ladder_bounds(hier.ladder, lower, np.inf if upper is None else upper)
        if lo is not None:
            moves.append(Move("reheight", float(level), v, lo=lo, hi=hi,
                              key=_move_key(hier, "reheight", level, v)))
    for v in at_level:
        for s in hier.children[v]:
            moves.extend(_relocations(hier, s, float(level)))
    return moves


def _reheight_gain(ctx, move):
    v = move.vertex
    members = ctx.leaves[v]
    block = ctx.levels[np.ix_(members, members)]
    rows, cols = np.nonzero(np.abs(block - ctx.heights[v]) <= LEVEL_TOLERANCE)
    rows, cols = members[rows], members[cols]
    observed = ctx.observed[rows, cols]
    base = ctx.base[rows, cols]
    new_level = best_ladder_level(observed, base, move.lo, move.hi, ctx.ladder, ctx.kind)
    if new_level is None or abs(new_level - ctx.heights[v]) <= LEVEL_TOLERANCE:
        return ScoredMove(move, 0.0, new_level)
    old = restricted_objective(observed, base, ctx.heights[v], ctx.kind)
    new = restricted_objective(observed, base, new_level, ctx.kind)
    return ScoredMove(move, old - new, new_level)


def _relocation_gain(ctx, move):
    subtree = ctx.leaves[move.vertex]
    # the target may be an ancestor of the subtree
    target = np.setdiff1d(ctx.leaves[move.target], subtree)
    n = ctx.observed.shape[0]
    outside = np.setdiff1d(np.arange(n), subtree)
    in_target = np.isin(outside, target)

    if move.attach == "join":
        new_level = float(ctx.heights[move.target])
    else:
        out_idx, in_idx = np.ix_(subtree, target), np.ix_(target, subtree)
        observed = np.concatenate([ctx.observed[out_idx].ravel(), ctx.observed[in_idx].ravel()])
        base = np.concatenate([ctx.base[out_idx].ravel(), ctx.base[in_idx].ravel()])
        new_level = best_ladder_level(observed, base, move.lo, move.hi, ctx.ladder, ctx.kind)
        if new_level is None:
            return ScoredMove(move, -np.inf, None)

    old_levels = ctx.levels[np.ix_(subtree, outside)]
    new_levels = np.tile(ctx.levels[target[0], outside], (len(subtree), 1))
    new_levels[:, in_target] = new_level

    out_idx, in_idx = np.ix_(subtree, outside), np.ix_(outside, subtree)
    observed_out, base_out = ctx.observed[out_idx], ctx.base[out_idx]
    observed_in, base_in = ctx.observed[in_idx].T, ctx.base[in_idx].T
    old = (pair_terms(observed_out, base_out * (1.0 / old_levels - 1.0), ctx.kind).sum()
           + pair_terms(observed_in, base_in * (1.0 / old_levels - 1.0), ctx.kind).sum())
    new = (pair_terms(observed_out, base_out * (1.0 / new_levels - 1.0), ctx.kind).sum()
           + pair_terms(observed_in, base_in * (1.0 / new_levels - 1.0), ctx.kind).sum())
    return ScoredMove(move, float(old - new), new_level)


def evaluate_move(ctx: MoveContext, move: Move) -> ScoredMove:
    if move.kind == "reheight":
        return _reheight_gain(ctx, move)
    return _relocation_gain(ctx, move)


_WORKER_CONTEXT = None


def _init_worker(ctx):
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = ctx


def _evaluate_chunk(moves):
    return [evaluate_move(_WORKER_CONTEXT, move) for move in moves]


def evaluate_moves(ctx: MoveContext, moves, workers=1) -> List[ScoredMove]:
    """Score all moves against one snapshot; the Pool path returns the serial result order"""
    if workers <= 1 or len(moves) < PARALLEL_MIN_CANDIDATES:
        return [evaluate_move(ctx, move) for move in moves]
    chunks = [list(chunk) for chunk in np.array_split(np.array(moves, dtype=object), workers) if len(chunk)]
    with Pool(processes=workers, initializer=_init_worker, initargs=(ctx,)) as pool:
        results = pool.map(_evaluate_chunk, chunks)
    return [scored for chunk in results for scored in chunk]


def select_best(scored: List[ScoredMove]) -> Optional[ScoredMove]:
    """Largest gain; equal gains resolved by the smallest (level, node index) key"""
    best = None
    for candidate in scored:
        if best is None or candidate.gain > best.gain or (
                candidate.gain == best.gain and candidate.move.key < best.move.key):
            best = candidate
    return best


def apply_move(hier, scored: ScoredMove):
    move = scored.move
    if move.kind == "reheight":
        return hier.with_height(move.vertex, scored.new_level)
    return hier.relocate(move.vertex, move.target, move.attach, scored.new_level)
