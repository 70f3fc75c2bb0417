# geo_utils.py
"""
Great-circle distances between node coordinates and distance binning.
"""
import logging
from typing import Optional

import numpy as np

from config import EARTH_RADIUS_KM
from hierflow.data_structures import BinSpec, DistanceMatrix, FlowNetwork
from hierflow.exceptions import InputValidationError

logger = logging.getLogger(__name__)


def great_circle_distance(p, q, radius=EARTH_RADIUS_KM):
    """
    Haversine distance in km between two (lat, lon) coordinates in degrees.
    """
    lat1, lon1 = np.radians(p[0]), np.radians(p[1])
    lat2, lon2 = np.radians(q[0]), np.radians(q[1])
    hav = (np.sin((lat2 - lat1) / 2.0) ** 2
           + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
    return float(2.0 * radius * np.arcsin(np.sqrt(np.clip(hav, 0.0, 1.0))))


def pairwise_great_circle(coords, radius=EARTH_RADIUS_KM):
    """Vectorised haversine over an (n, 2) array of (lat, lon) degrees"""
    coords = np.radians(np.asarray(coords, dtype=float).reshape(-1, 2))
    lat = coords[:, 0][:, np.newaxis]
    lon = coords[:, 1][:, np.newaxis]
    hav = (np.sin((lat.T - lat) / 2.0) ** 2
           + np.cos(lat) * np.cos(lat.T) * np.sin((lon.T - lon) / 2.0) ** 2)
    values = 2.0 * radius * np.arcsin(np.sqrt(np.clip(hav, 0.0, 1.0)))
    values = (values + values.T) / 2.0
    np.fill_diagonal(values, 0.0)
    return values


def _off_diagonal(values):
    n = values.shape[0]
    return values[~np.eye(n, dtype=bool)]


def build_distance_matrix(net: FlowNetwork, bins: BinSpec,
                          distances: Optional[np.ndarray] = None) -> DistanceMatrix:
    """
    Pairwise distances and bin ids for a spatial network. An explicit distance
    matrix (from parse_distance_csv) takes precedence over node coordinates.

    Raises:
        InputValidationError: no coordinates and no explicit distances, or a
            distance beyond the last explicit bin edge
    """
    if distances is not None:
        values = np.asarray(distances, dtype=float)
        if values.shape != (net.n, net.n):
            raise InputValidationError(
                f"distance matrix shape {values.shape} does not match node count {net.n}")
        source = "explicit distance file"
    elif net.has_coordinates or net.n == 0:
        values = pairwise_great_circle([node.coordinate for node in net.nodes]) if net.n else np.zeros((0, 0))
        source = "node coordinates"
    else:
        missing = [node.id for node in net.nodes if node.coordinate is None]
        raise InputValidationError(
            f"spatial mode needs coordinates or a distance file; nodes without coordinates: {missing}")

    off_diagonal = _off_diagonal(values)
    resolved = bins.resolve(off_diagonal)
    bin_index = np.full(values.shape, -1, dtype=int)
    if net.n > 1:
        mask = ~np.eye(net.n, dtype=bool)
        bin_index[mask] = resolved.assign(values[mask])
    logger.info(f"Built distance matrix for {net.n} nodes from {source}; "
                f"{resolved.count} {resolved.mode} bins, edges {resolved.edges}")
    empty = sorted(set(range(resolved.count)) - set(np.unique(bin_index[bin_index >= 0]).tolist()))
    if empty:
        logger.warning(f"Distance bins with no node pairs: {empty}")
    return DistanceMatrix(values=values, bin_index=bin_index, bins=resolved)


def unit_distance_matrix(net: FlowNetwork) -> DistanceMatrix:
    """Generic network: d(a,b) := 1 for all a != b, one bin"""
    n = net.n
    values = np.ones((n, n)) - np.eye(n)
    bin_index = np.zeros((n, n), dtype=int)
    np.fill_diagonal(bin_index, -1)
    return DistanceMatrix(values=values, bin_index=bin_index, bins=BinSpec.single())
