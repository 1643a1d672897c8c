"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .errors import EmptyGraph


def check_matrix(X) -> np.ndarray:
    """2-D finite float matrix with at least one row."""
    return check_array(np.asarray(X, dtype=np.float64), ensure_2d=True, dtype=np.float64, copy=False)


def check_series(values, name: str = "series") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_network(net, require_edges: bool = False):
    if net.n_nodes == 0:
        raise EmptyGraph("the network has no nodes")
    if require_edges and net.n_edges == 0:
        raise EmptyGraph("the network has no edges")
    return net
