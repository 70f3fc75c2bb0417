# data_structures.py
"""
Core value types: flow networks, distance bins, partitions, model parameters
and fit configuration/reporting. All types are treated as immutable after
construction; arrays are flagged read-only.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from typing import Optional, Tuple

import numpy as np

from config import DEFAULT_BIN_COUNT, DEFAULT_LADDER_SIZE
from hierflow.exceptions import InputValidationError

logger = logging.getLogger(__name__)

BIN_MODES = ("linear", "logarithmic", "explicit")
BIN_MODE_ALIASES = {"log": "logarithmic", "explicit-edges": "explicit"}
OBJECTIVE_KINDS = ("least-squares", "poisson-normal")
OBJECTIVE_ALIASES = {"ls": "least-squares", "poisson": "poisson-normal"}
FIT_MODES = ("spatial", "generic", "prefit")
FIT_MODE_ALIASES = {"gravity-only-prefit-then-h": "prefit"}


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class NodeRecord:
    id: str
    label: str = ""
    coordinate: Optional[Tuple[float, float]] = None  # (lat, lon) degrees

    def __post_init__(self):
        if not self.id:
            raise InputValidationError("node id must be non-empty")
        if self.coordinate is not None:
            lat, lon = self.coordinate
            if not (-90.0 <= lat <= 90.0):
                raise InputValidationError(f"latitude {lat} out of range [-90, 90] for node {self.id}")
            if not (-180.0 <= lon <= 180.0):
                raise InputValidationError(f"longitude {lon} out of range [-180, 180] for node {self.id}")


@dataclass(frozen=True, eq=False)
class FlowNetwork:
    """Directed weighted network; flows[a, b] is the observed flow e(a, b)"""
    nodes: Tuple[NodeRecord, ...]
    flows: np.ndarray
    directed: bool = True

    def __post_init__(self):
        nodes = tuple(self.nodes)
        flows = _frozen_array(self.flows if len(nodes) else np.zeros((0, 0)))
        if flows.ndim != 2 or flows.shape != (len(nodes), len(nodes)):
            raise InputValidationError(
                f"flow matrix shape {flows.shape} does not match node count {len(nodes)}")
        if not np.all(np.isfinite(flows)):
            raise InputValidationError("flow values must be finite")
        if np.any(flows < 0):
            a, b = np.argwhere(flows < 0)[0]
            raise InputValidationError(
                f"negative flow {flows[a, b]} from {nodes[a].id} to {nodes[b].id}")
        ids = [node.id for node in nodes]
        if len(set(ids)) != len(ids):
            seen = set()
            dupes = [i for i in ids if i in seen or seen.add(i)]
            raise InputValidationError(f"duplicate node ids: {sorted(set(dupes))}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "flows", flows)

    @property
    def n(self):
        return len(self.nodes)

    @property
    def node_ids(self):
        return tuple(node.id for node in self.nodes)

    def index_of(self, node_id):
        for i, node in enumerate(self.nodes):
            if node.id == node_id:
                return i
        raise InputValidationError(f"unknown node: {node_id}")

    @property
    def has_coordinates(self):
        return self.n > 0 and all(node.coordinate is not None for node in self.nodes)


@dataclass(frozen=True)
class BinSpec:
    """
    Distance binning. Edges are the inclusive upper bounds of the bins:
    bin i holds distances in (edges[i-1], edges[i]], bin 0 everything up to edges[0].
    linear/logarithmic specs derive their edges from the data on resolve().
    """
    mode: str = "logarithmic"
    count: int = DEFAULT_BIN_COUNT
    edges: Optional[Tuple[float, ...]] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __post_init__(self):
        mode = BIN_MODE_ALIASES.get(self.mode, self.mode)
        if mode not in BIN_MODES:
            raise InputValidationError(f"unknown bin mode: {self.mode}")
        object.__setattr__(self, "mode", mode)
        if self.edges is not None:
            edges = tuple(float(e) for e in self.edges)
            if not edges:
                raise InputValidationError("bin edges must be non-empty")
            if any(not np.isfinite(e) or e < 0 for e in edges):
                raise InputValidationError(f"bin edges must be finite and non-negative: {edges}")
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise InputValidationError(f"bin edges must be strictly ascending: {edges}")
            object.__setattr__(self, "edges", edges)
            object.__setattr__(self, "count", len(edges))
        elif mode == "explicit":
            raise InputValidationError("explicit bin mode requires edges")
        if int(self.count) < 1:
            raise InputValidationError(f"bin count must be >= 1, got {self.count}")
        object.__setattr__(self, "count", int(self.count))

    @classmethod
    def linear(cls, count, lo=None, hi=None):
        return cls(mode="linear", count=count, lo=lo, hi=hi)

    @classmethod
    def logarithmic(cls, count=DEFAULT_BIN_COUNT, lo=None, hi=None):
        return cls(mode="logarithmic", count=count, lo=lo, hi=hi)

    @classmethod
    def explicit(cls, edges):
        return cls(mode="explicit", edges=tuple(edges))

    @classmethod
    def single(cls):
        """One bin holding the unit distance of generic networks"""
        return cls.explicit((1.0,))

    @property
    def resolved(self):
        return self.edges is not None

    def resolve(self, distances):
        """Return a spec with concrete edges derived from the off-diagonal distances"""
        if self.resolved:
            return self
        d = np.asarray(distances, dtype=float).ravel()
        if self.hi is not None:
            hi = float(self.hi)
        elif d.size:
            hi = float(d.max())
        else:
            hi = 1.0
        if self.mode == "linear":
            lo = 0.0 if self.lo is None else float(self.lo)
            if hi <= lo:
                return BinSpec(mode="linear", edges=(max(hi, lo, 1.0),))
            edges = np.linspace(lo, hi, self.count + 1)[1:]
        else:
            positive = d[d > 0]
            if self.lo is not None:
                lo = float(self.lo)
            elif positive.size:
                lo = float(positive.min())
            else:
                lo = 0.0
            if lo <= 0 or hi <= lo:
                return BinSpec(mode="logarithmic", edges=(max(hi, 1.0),))
            edges = np.geomspace(lo, hi, self.count + 1)[1:]
        edges[-1] = hi
        return BinSpec(mode=self.mode, edges=tuple(float(e) for e in edges), lo=self.lo, hi=self.hi)

    def assign(self, values):
        """Map distances to bin ids; explicit specs reject distances beyond the last edge"""
        if not self.resolved:
            raise InputValidationError("bin spec must be resolved before assigning distances")
        values = np.asarray(values, dtype=float)
        idx = np.searchsorted(np.asarray(self.edges), values, side="left")
        overflow = idx >= self.count
        if np.any(overflow):
            if self.mode == "explicit":
                worst = float(values[overflow].max())
                raise InputValidationError(
                    f"distance {worst:.3f} km exceeds the last bin edge {self.edges[-1]}")
            idx = np.minimum(idx, self.count - 1)
        return idx.astype(int)

    def to_dict(self):
        return {"mode": self.mode, "count": self.count,
                "edges": list(self.edges) if self.edges is not None else None,
                "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Pairwise distances (km) with per-pair bin ids; the diagonal carries bin -1"""
    values: np.ndarray
    bin_index: np.ndarray
    bins: BinSpec

    def __post_init__(self):
        values = _frozen_array(self.values)
        bin_index = _frozen_array(self.bin_index, dtype=int)
        if values.shape != bin_index.shape or values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InputValidationError("distance and bin matrices must be square and of equal shape")
        if not np.allclose(values, values.T):
            raise InputValidationError("distance matrix must be symmetric")
        if np.any(np.diag(values) != 0):
            raise InputValidationError("distance matrix must have a zero diagonal")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bin_index", bin_index)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def n_bins(self):
        return self.bins.count


@dataclass(frozen=True, eq=False)
class Partition:
    """Community labels per node index; labels are contiguous from 0"""
    labels: np.ndarray
    level: float
    exact: bool = True
    node_ids: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen_array(self.labels, dtype=int))
        if self.node_ids is not None:
            ids = tuple(self.node_ids)
            if len(ids) != len(self.labels):
                raise InputValidationError("partition node ids and labels differ in length")
            object.__setattr__(self, "node_ids", ids)

    @property
    def n(self):
        return len(self.labels)

    @property
    def n_communities(self):
        return len(np.unique(self.labels))

    def communities(self):
        return [np.flatnonzero(self.labels == c) for c in np.unique(self.labels)]

    def as_mapping(self):
        keys = self.node_ids if self.node_ids is not None else range(self.n)
        return {key: int(label) for key, label in zip(keys, self.labels)}

    def refines(self, other):
        """True when every community of self lies inside one community of other"""
        return all(len(np.unique(other.labels[members])) == 1 for members in self.communities())


@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    Node weights and per-bin distance deterrence. The hierarchical deterrence
    is fixed to f(h) = 1/h - 1 and carries no parameters.
    """
    w_out: np.ndarray
    w_in: np.ndarray
    g: np.ndarray
    node_ids: Optional[Tuple[str, ...]] = None
    flagged_bins: Tuple[int, ...] = ()

    deterrence_form = "1/h - 1"

    def __post_init__(self):
        w_out = _frozen_array(self.w_out)
        w_in = _frozen_array(self.w_in)
        g = _frozen_array(self.g)
        if w_out.shape != w_in.shape or w_out.ndim != 1:
            raise InputValidationError("w_out and w_in must be vectors of equal length")
        for name, arr in (("w_out", w_out), ("w_in", w_in), ("g", g)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise InputValidationError(f"{name} values must be finite and non-negative")
        if g.ndim != 1 or g.size < 1:
            raise InputValidationError("g must hold at least one bin value")
        if self.node_ids is not None:
            ids = tuple(self.node_ids)
            if len(ids) != w_out.size:
                raise InputValidationError("node ids and weight vectors differ in length")
            object.__setattr__(self, "node_ids", ids)
        object.__setattr__(self, "w_out", w_out)
        object.__setattr__(self, "w_in", w_in)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "flagged_bins", tuple(int(b) for b in self.flagged_bins))

    @property
    def n(self):
        return self.w_out.size

    def replace(self, **changes):
        values = {"w_out": self.w_out, "w_in": self.w_in, "g": self.g,
                  "node_ids": self.node_ids, "flagged_bins": self.flagged_bins}
        values.update(changes)
        return ModelParams(**values)

    def rebalanced(self):
        """Fix the gauge so that sum(w_out) == sum(w_in); model values are unchanged"""
        total_out, total_in = self.w_out.sum(), self.w_in.sum()
        if total_out <= 0 or total_in <= 0:
            return self
        scale = np.sqrt(total_in / total_out)
        return self.replace(w_out=self.w_out * scale, w_in=self.w_in / scale)


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str = "poisson-normal"
    include_loops: bool = False

    def __post_init__(self):
        kind = OBJECTIVE_ALIASES.get(self.kind, self.kind)
        if kind not in OBJECTIVE_KINDS:
            raise InputValidationError(f"unknown objective kind: {self.kind}")
        object.__setattr__(self, "kind", kind)


def default_ladder(size=DEFAULT_LADDER_SIZE):
    """Evenly spaced levels {1/(L+1), ..., L/(L+1)} strictly inside (0, 1)"""
    if int(size) < 1:
        raise InputValidationError(f"ladder size must be >= 1, got {size}")
    size = int(size)
    return tuple(i / (size + 1) for i in range(1, size + 1))


def validate_ladder(ladder):
    ladder = tuple(float(level) for level in ladder)
    if not ladder:
        raise InputValidationError("level ladder must be non-empty")
    if any(not (0.0 < level < 1.0) for level in ladder):
        raise InputValidationError(f"ladder levels must lie in (0, 1): {ladder}")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise InputValidationError(f"ladder levels must be strictly ascending: {ladder}")
    return ladder


@dataclass(frozen=True)
class FitConfig:
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    ladder: Tuple[float, ...] = field(default_factory=default_ladder)
    bins: BinSpec = field(default_factory=BinSpec)
    weight_loop_tol: float = 1e-8
    weight_loop_max_iter: int = 200
    outer_max_sweeps: int = 100
    min_move_gain: float = 1e-10
    seed: int = 0
    mode: str = "spatial"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "ladder", validate_ladder(self.ladder))
        mode = FIT_MODE_ALIASES.get(self.mode, self.mode)
        if mode not in FIT_MODES:
            raise InputValidationError(f"unknown fit mode: {self.mode}")
        object.__setattr__(self, "mode", mode)
        for name in ("weight_loop_tol", "min_move_gain"):
            if not getattr(self, name) > 0:
                raise InputValidationError(f"{name} must be > 0")
        for name in ("weight_loop_max_iter", "outer_max_sweeps", "workers"):
            if int(getattr(self, name)) < 1:
                raise InputValidationError(f"{name} must be >= 1")

    def replace(self, **changes):
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return FitConfig(**values)

    def to_dict(self):
        return {
            "objective": asdict(self.objective),
            "ladder": list(self.ladder),
            "bins": self.bins.to_dict(),
            "weight_loop_tol": self.weight_loop_tol,
            "weight_loop_max_iter": self.weight_loop_max_iter,
            "outer_max_sweeps": self.outer_max_sweeps,
            "min_move_gain": self.min_move_gain,
            "seed": self.seed,
            "mode": self.mode,
        }


@dataclass(frozen=True)
class MoveRecord:
    sweep: int
    level: float
    kind: str
    attach: Optional[str]
    subtree: Tuple[str, ...]
    target: Tuple[str, ...]
    old_level: float
    new_level: float
    gain: float
    objective: float


@dataclass
class FitReport:
    trajectory: list
    moves: list
    params: ModelParams
    hierarchy: object
    converged: bool
    sweeps: int
    objective: float
    seed: int = 0
    prefit_objective: Optional[float] = None
    prefit_params: Optional[ModelParams] = None

    @property
    def step_objectives(self):
        """Objective after the initial weight fit and after every accepted move"""
        return self.trajectory[:1] + [move.objective for move in self.moves]
