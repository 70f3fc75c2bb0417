# model.py
"""
Multiplicative hierarchy + gravity model

    m(a,b) = w_out(a) * w_in(b) * f(h(a,b)) * g(bin(a,b)),   f(h) = 1/h - 1

its objective functions and the Poisson synthetic generator. With a single
unit-distance bin and g = 1 this is the space-independent model.
"""
import logging

import numpy as np

from hierflow.data_structures import DistanceMatrix, FlowNetwork, ModelParams, NodeRecord, ObjectiveSpec
from hierflow.exceptions import InputValidationError, ModelEvaluationError, UnsupportedConfigurationError

logger = logging.getLogger(__name__)


def deterrence_f(h):
    """f(h) = 1/h - 1 for h in (0, 1]; strictly decreasing with f(1) = 0"""
    values = np.asarray(h, dtype=float)
    if np.any(values <= 0) or np.any(values > 1):
        raise InputValidationError(f"deterrence f is defined for h in (0, 1], got {h}")
    out = 1.0 / values - 1.0
    return float(out) if out.ndim == 0 else out


def deterrence_matrix(levels):
    """f applied to every off-diagonal level; loops get 0"""
    levels = np.asarray(levels, dtype=float)
    off = ~np.eye(levels.shape[0], dtype=bool)
    out = np.zeros_like(levels)
    out[off] = deterrence_f(levels[off]) if off.any() else 0.0
    return out


def base_matrix(params: ModelParams, dist: DistanceMatrix):
    """w_out(a) * w_in(b) * g(bin(a,b)) with a zero diagonal"""
    if params.n != dist.n:
        raise InputValidationError(f"parameters cover {params.n} nodes, distances {dist.n}")
    if params.g.size < dist.n_bins:
        raise InputValidationError(f"g has {params.g.size} values for {dist.n_bins} distance bins")
    base = np.outer(params.w_out, params.w_in)
    off = dist.bin_index >= 0
    g = np.zeros_like(base)
    g[off] = params.g[dist.bin_index[off]]
    return base * g


def model_matrix(params: ModelParams, hier, dist: DistanceMatrix):
    """All model values m(a,b); the diagonal (loops) is 0"""
    return base_matrix(params, dist) * deterrence_matrix(hier.level_matrix)


def model_value(params: ModelParams, hier, dist: DistanceMatrix, a, b) -> float:
    i, j = hier.index_of(a), hier.index_of(b)
    if i == j:
        raise UnsupportedConfigurationError("loop pairs (a == b) are not modelled")
    f = deterrence_f(hier.level_matrix[i, j])
    g = params.g[dist.bin_index[i, j]]
    return float(params.w_out[i] * params.w_in[j] * f * g)


def pair_terms(observed, modelled, kind):
    """Element-wise objective contributions: (e-m)^2 or (e-m)^2/m"""
    residual = np.asarray(observed, dtype=float) - modelled
    if kind == "least-squares":
        return residual ** 2
    return residual ** 2 / modelled


def objective(net: FlowNetwork, params: ModelParams, hier, dist: DistanceMatrix,
              spec: ObjectiveSpec = None) -> float:
    """
    Sum of pair terms over ordered pairs a != b.

    Raises:
        UnsupportedConfigurationError: include_loops (h(a,a) = 0 makes f infinite)
        ModelEvaluationError: poisson-normal with a zero model value
    """
    spec = spec or ObjectiveSpec()
    if spec.include_loops:
        raise UnsupportedConfigurationError(
            "loop-including objectives need a finite f(h(a,a)); the level ladder gives h(a,a) = 0")
    if net.n != params.n:
        raise InputValidationError(f"network has {net.n} nodes, parameters cover {params.n}")
    modelled = model_matrix(params, hier, dist)
    off = ~np.eye(net.n, dtype=bool)
    if spec.kind == "poisson-normal":
        zero = off & (modelled <= 0)
        if zero.any():
            a, b = np.argwhere(zero)[0]
            pair = (net.nodes[a].id, net.nodes[b].id)
            raise ModelEvaluationError(
                f"poisson-normal objective undefined: m{pair} = 0", pair=pair)
    return float(pair_terms(net.flows[off], modelled[off], spec.kind).sum())


def _node_records(params: ModelParams, hier, nodes):
    if nodes is not None:
        return tuple(nodes)
    ids = params.node_ids or hier.node_ids or tuple(str(i) for i in range(params.n))
    return tuple(NodeRecord(id=node_id, label=node_id) for node_id in ids)


def sample_poisson_network(params: ModelParams, hier, dist: DistanceMatrix, seed: int,
                           nodes=None) -> FlowNetwork:
    """Independent Poisson draw with mean m(a,b) per ordered pair a != b; loops are 0"""
    means = model_matrix(params, hier, dist)
    if not np.all(np.isfinite(means)):
        raise InputValidationError("model means must be finite for sampling")
    rng = np.random.default_rng(seed)
    flows = rng.poisson(means).astype(float)
    np.fill_diagonal(flows, 0.0)
    logger.info(f"Sampled Poisson network for {params.n} nodes (seed {seed}, total flow {flows.sum():.0f})")
    return FlowNetwork(nodes=_node_records(params, hier, nodes), flows=flows)


def expected_network(params: ModelParams, hier, dist: DistanceMatrix, nodes=None) -> FlowNetwork:
    """Noiseless network e(a,b) = m(a,b)"""
    return FlowNetwork(nodes=_node_records(params, hier, nodes), flows=model_matrix(params, hier, dist))
