# fitting.py
"""
Parameter estimation and hierarchy search.

Weights and the distance deterrence are found by cycling closed-form
fixed-point updates; the hierarchy by greedy best-improvement moves swept
from the lowest ladder level to the highest, with a weight refit after every
accepted move. Both loops are monotone: a step that would raise the
objective is never kept.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import PREFIT_LEVEL, WEIGHT_FLOOR
from hierflow.data_structures import (DistanceMatrix, FitConfig, FitReport, FlowNetwork, ModelParams,
                                      MoveRecord)
from hierflow.exceptions import DegenerateFitError, InputValidationError
from hierflow.hierarchy import flat_hierarchy, random_hierarchy
from hierflow.model import deterrence_f, deterrence_matrix, objective
from hierflow.moves import (MoveContext, ScoredMove, best_ladder_level, enumerate_moves, evaluate_moves,
                            select_best, apply_move)

logger = logging.getLogger(__name__)


def _bin_matrix(params: ModelParams, dist: DistanceMatrix):
    g = np.zeros(dist.bin_index.shape)
    off = dist.bin_index >= 0
    g[off] = params.g[dist.bin_index[off]]
    return g


def _closed_form(observed, coeff, kind, axis):
    """
    Per-row (axis=1) or per-column (axis=0) minimiser of the objective in a
    single multiplicative factor x with model x * coeff.
    Returns (values, denominators); callers check the denominators.
    """
    if kind == "poisson-normal":
        denominator = coeff.sum(axis=axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(coeff > 0, observed ** 2 / np.where(coeff > 0, coeff, 1.0), 0.0)
            values = np.sqrt(ratio.sum(axis=axis) / denominator)
    else:
        denominator = (coeff ** 2).sum(axis=axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            values = (observed * coeff).sum(axis=axis) / denominator
    return values, denominator


def _check_nodes(denominator, net, what):
    bad = np.flatnonzero(~(denominator > 0))
    if bad.size:
        node = net.nodes[bad[0]].id
        raise DegenerateFitError(f"{what} update for node {node} has no pair with positive model factor",
                                 node=node)


def update_w_out(net: FlowNetwork, params: ModelParams, hier, dist: DistanceMatrix,
                 kind="poisson-normal") -> np.ndarray:
    """Closed-form w_out with w_in, g and the hierarchy held fixed"""
    coeff = params.w_in[np.newaxis, :] * _bin_matrix(params, dist) * deterrence_matrix(hier.level_matrix)
    values, denominator = _closed_form(net.flows, coeff, kind, axis=1)
    _check_nodes(denominator, net, "w_out")
    return np.maximum(values, WEIGHT_FLOOR)


def update_w_in(net: FlowNetwork, params: ModelParams, hier, dist: DistanceMatrix,
                kind="poisson-normal") -> np.ndarray:
    """Closed-form w_in with w_out, g and the hierarchy held fixed"""
    coeff = params.w_out[:, np.newaxis] * _bin_matrix(params, dist) * deterrence_matrix(hier.level_matrix)
    values, denominator = _closed_form(net.flows, coeff, kind, axis=0)
    _check_nodes(denominator, net, "w_in")
    return np.maximum(values, WEIGHT_FLOOR)


def update_g(net: FlowNetwork, params: ModelParams, hier, dist: DistanceMatrix,
             kind="poisson-normal"):
    """
    Closed-form g per distance bin. A bin with no pairs, or whose pairs all have
    a zero model factor, keeps its previous value and is reported as flagged.

    Returns:
        (g, flagged_bins)
    """
    off = dist.bin_index >= 0
    idx = dist.bin_index[off]
    coeff = (np.outer(params.w_out, params.w_in) * deterrence_matrix(hier.level_matrix))[off]
    observed = net.flows[off]
    n_bins = dist.n_bins
    if kind == "poisson-normal":
        positive = coeff > 0
        ratio = np.zeros_like(coeff)
        ratio[positive] = observed[positive] ** 2 / coeff[positive]
        numerator = np.bincount(idx, weights=ratio, minlength=n_bins)
        denominator = np.bincount(idx, weights=coeff, minlength=n_bins)
    else:
        numerator = np.bincount(idx, weights=observed * coeff, minlength=n_bins)
        denominator = np.bincount(idx, weights=coeff ** 2, minlength=n_bins)

    g = np.array(params.g[:n_bins], dtype=float)
    usable = denominator > 0
    if kind == "poisson-normal":
        g[usable] = np.sqrt(numerator[usable] / denominator[usable])
    else:
        g[usable] = numerator[usable] / denominator[usable]
    g[usable] = np.maximum(g[usable], WEIGHT_FLOOR)
    flagged = tuple(int(b) for b in np.flatnonzero(~usable))
    if flagged:
        logger.debug(f"Distance bins {list(flagged)} have no usable pairs; g kept at previous values")
    return g, flagged


def fit_weights(net: FlowNetwork, params: ModelParams, hier, dist: DistanceMatrix, cfg: FitConfig,
                fit_g=True) -> ModelParams:
    """
    Alternate w_in, w_out and g updates until the relative objective change of a
    full round drops below cfg.weight_loop_tol or cfg.weight_loop_max_iter rounds
    have run. The best parameters seen are returned, so the result never scores
    worse than the input. With a single distance bin g stays pinned at 1.
    """
    kind = cfg.objective.kind
    fit_g = fit_g and dist.n_bins > 1
    if net.n < 2:
        return params
    current = params
    best, best_value = params, objective(net, params, hier, dist, cfg.objective)
    previous = best_value
    for iteration in range(1, cfg.weight_loop_max_iter + 1):
        current = current.replace(w_in=update_w_in(net, current, hier, dist, kind))
        current = current.replace(w_out=update_w_out(net, current, hier, dist, kind))
        if fit_g:
            g, flagged = update_g(net, current, hier, dist, kind)
            current = current.replace(g=g, flagged_bins=flagged)
        current = current.rebalanced()
        value = objective(net, current, hier, dist, cfg.objective)
        if value > previous:
            logger.warning(f"Weight round {iteration} raised the objective "
                           f"({previous:.12g} -> {value:.12g}); best parameters retained")
        if value < best_value:
            best, best_value = current, value
        if value <= 0 or abs(previous - value) <= cfg.weight_loop_tol * max(abs(previous), 1e-300):
            logger.debug(f"Weight loop converged after {iteration} rounds, objective {best_value:.12g}")
            break
        previous = value
    else:
        logger.debug(f"Weight loop stopped at {cfg.weight_loop_max_iter} rounds, objective {best_value:.12g}")
    return best


def optimal_level_value(net: FlowNetwork, params: ModelParams, dist: DistanceMatrix, pairs, bounds,
                        ladder, kind="poisson-normal") -> Optional[float]:
    """
    Best ladder level for a set of pairs sharing one hierarchical level, within
    inclusive bounds (lo, hi). None when no ladder level fits the bounds.
    """
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    if pairs.size == 0:
        raise InputValidationError("optimal level needs at least one pair")
    rows, cols = pairs[:, 0], pairs[:, 1]
    base = params.w_out[rows] * params.w_in[cols] * params.g[dist.bin_index[rows, cols]]
    lo, hi = bounds
    return best_ladder_level(net.flows[rows, cols], base, lo, hi, ladder, kind)


def initial_params(net: FlowNetwork, dist: DistanceMatrix) -> ModelParams:
    """Strength-based start: w_out ~ out-strength, w_in ~ in-strength, g = 1"""
    flows = np.array(net.flows, dtype=float)
    np.fill_diagonal(flows, 0.0)
    total = flows.sum()
    if total > 0:
        w_out = np.maximum(flows.sum(axis=1) / np.sqrt(total), WEIGHT_FLOOR)
        w_in = np.maximum(flows.sum(axis=0) / np.sqrt(total), WEIGHT_FLOOR)
    else:
        w_out = np.ones(net.n)
        w_in = np.ones(net.n)
    return ModelParams(w_out=w_out, w_in=w_in, g=np.ones(max(dist.n_bins, 1)),
                       node_ids=net.node_ids).rebalanced()


@dataclass(frozen=True)
class StepResult:
    hierarchy: object
    params: ModelParams
    gain: float
    objective: float
    move: Optional[ScoredMove] = None


def greedy_step(net: FlowNetwork, params: ModelParams, hier, dist: DistanceMatrix, cfg: FitConfig,
                level=None, fit_g=True, before=None) -> StepResult:
    """
    Apply the single best move at `level` (all levels when None), then refit the
    weights. A move whose gain is below cfg.min_move_gain, or whose refit does
    not strictly lower the full objective, is rejected and the input returned.
    """
    if before is None:
        before = objective(net, params, hier, dist, cfg.objective)
    levels = [level] if level is not None else list(cfg.ladder)
    candidates = [move for h in levels for move in enumerate_moves(hier, h)]
    if not candidates:
        return StepResult(hier, params, 0.0, before)
    ctx = MoveContext.build(net, params, hier, dist, cfg.objective.kind)
    best = select_best(evaluate_moves(ctx, candidates, cfg.workers))
    if best is None or not best.gain >= cfg.min_move_gain:
        return StepResult(hier, params, 0.0, before)
    new_hier = apply_move(hier, best)
    new_params = fit_weights(net, params, new_hier, dist, cfg, fit_g=fit_g)
    after = objective(net, new_params, new_hier, dist, cfg.objective)
    if not after < before:
        logger.debug(f"Move {best.move.kind} at level {best.move.level:.4f} rejected after refit "
                     f"({before:.12g} -> {after:.12g})")
        return StepResult(hier, params, 0.0, before)
    return StepResult(new_hier, new_params, before - after, after, best)


def _move_record(hier, scored: ScoredMove, sweep, value, gain) -> MoveRecord:
    move = scored.move
    if move.kind == "reheight":
        subtree, target = hier.leaf_names(hier.leaves[move.vertex]), ()
        old_level = float(hier.height[move.vertex])
    else:
        subtree = hier.leaf_names(hier.leaves[move.vertex])
        target = hier.leaf_names(hier.leaves[move.target])
        old_level = float(hier.height[hier.parent[move.vertex]])
    return MoveRecord(sweep=sweep, level=move.level, kind=move.kind, attach=move.attach,
                      subtree=subtree, target=target, old_level=old_level,
                      new_level=float(scored.new_level), gain=float(gain), objective=float(value))


def nearest_ladder_level(ladder, value):
    """Ladder level closest to value; the lower one on ties"""
    ladder = np.asarray(ladder)
    gaps = np.abs(ladder - value)
    return float(ladder[np.flatnonzero(gaps <= gaps.min() + 1e-12)[0]])


def _prefit(net, params, dist, cfg, fit_g):
    flat = flat_hierarchy(net.n, PREFIT_LEVEL, node_ids=net.node_ids)
    prefit_params = fit_weights(net, params, flat, dist, cfg, fit_g=fit_g)
    prefit_value = objective(net, prefit_params, flat, dist, cfg.objective)
    logger.info(f"Gravity-only prefit objective: {prefit_value:.6f}")
    start_level = nearest_ladder_level(cfg.ladder, PREFIT_LEVEL)
    hier = flat_hierarchy(net.n, start_level, ladder=cfg.ladder, node_ids=net.node_ids)
    params = prefit_params.replace(w_out=prefit_params.w_out / deterrence_f(start_level))
    return hier, params, prefit_params, prefit_value


def fit(net: FlowNetwork, dist: DistanceMatrix, cfg: FitConfig = None) -> FitReport:
    """
    Fit hierarchy and parameters to a network.

    spatial  random starting hierarchy with every merge at or above the level
             nearest 0.5, g fitted per distance bin
    generic  as spatial on a unit-distance matrix (single bin, g = 1)
    prefit   gravity-only fit (every pair at h = 0.5) first; the hierarchy search
             then starts from the flat tree with g held at the prefit values

    Sweeps visit the ladder levels in ascending order and repeat while a sweep
    accepts at least one move, up to cfg.outer_max_sweeps.
    """
    cfg = cfg or FitConfig()
    if dist.n != net.n:
        raise InputValidationError(f"distance matrix covers {dist.n} nodes, network has {net.n}")
    if cfg.mode == "generic" and dist.n_bins != 1:
        raise InputValidationError("generic mode expects the unit-distance matrix (one bin)")

    if net.n <= 1:
        hier = random_hierarchy(net.n, cfg.ladder, cfg.seed, node_ids=net.node_ids)
        params = ModelParams(w_out=np.ones(net.n), w_in=np.ones(net.n), g=np.ones(max(dist.n_bins, 1)),
                             node_ids=net.node_ids)
        logger.info(f"Network has {net.n} node(s); nothing to fit")
        return FitReport(trajectory=[0.0], moves=[], params=params, hierarchy=hier, converged=True,
                         sweeps=0, objective=0.0, seed=cfg.seed)

    fit_g = dist.n_bins > 1
    params = initial_params(net, dist)
    prefit_value, prefit_params = None, None
    if cfg.mode == "prefit":
        hier, params, prefit_params, prefit_value = _prefit(net, params, dist, cfg, fit_g)
        fit_g = False
    else:
        hier = random_hierarchy(net.n, cfg.ladder, cfg.seed, node_ids=net.node_ids,
                                min_level=nearest_ladder_level(cfg.ladder, PREFIT_LEVEL))

    params = fit_weights(net, params, hier, dist, cfg, fit_g=fit_g)
    current = objective(net, params, hier, dist, cfg.objective)
    logger.info(f"Starting hierarchy search: {net.n} nodes, mode {cfg.mode}, "
                f"objective {cfg.objective.kind}, initial value {current:.6f}")

    trajectory, moves = [current], []
    converged, sweeps = False, 0
    for sweep in range(1, cfg.outer_max_sweeps + 1):
        sweeps = sweep
        accepted = 0
        for level in cfg.ladder:
            step = greedy_step(net, params, hier, dist, cfg, level=level, fit_g=fit_g, before=current)
            if step.move is None:
                continue
            moves.append(_move_record(hier, step.move, sweep, step.objective, step.gain))
            hier, params, current = step.hierarchy, step.params, step.objective
            accepted += 1
        trajectory.append(current)
        logger.info(f"Sweep {sweep}: {accepted} moves accepted, objective {current:.6f}")
        if accepted == 0:
            converged = True
            break
    if not converged:
        logger.warning(f"Hierarchy search stopped after {cfg.outer_max_sweeps} sweeps without converging")
    if params.flagged_bins:
        logger.warning(f"Distance bins {list(params.flagged_bins)} have no usable pairs; "
                       f"g kept at its starting value there")

    return FitReport(trajectory=trajectory, moves=moves, params=params, hierarchy=hier,
                     converged=converged, sweeps=sweeps, objective=current, seed=cfg.seed,
                     prefit_objective=prefit_value, prefit_params=prefit_params)


def fit_with_restarts(net: FlowNetwork, dist: DistanceMatrix, cfg: FitConfig = None,
                      restarts=1) -> FitReport:
    """Run fit() for seeds cfg.seed .. cfg.seed + restarts - 1 and keep the lowest objective"""
    cfg = cfg or FitConfig()
    if int(restarts) < 1:
        raise InputValidationError(f"restarts must be >= 1, got {restarts}")
    best = None
    for offset in range(int(restarts)):
        report = fit(net, dist, cfg.replace(seed=cfg.seed + offset))
        logger.info(f"Restart {offset + 1}/{restarts} (seed {report.seed}): objective {report.objective:.6f}")
        if best is None or report.objective < best.objective:
            best = report
    return best
