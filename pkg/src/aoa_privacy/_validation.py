"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numpy as np


def check_csi(h, allow_batch: bool = False) -> np.ndarray:
    """Coerce effective CSI to a complex ``(K_rx, L)`` array.

    With ``allow_batch`` a ``(n_packets, K_rx, L)`` stack is accepted too.
    """
    h = np.asarray(h)
    if h.size == 0:
        raise ValueError("CSI is empty")
    if not np.issubdtype(h.dtype, np.number):
        raise TypeError(f"CSI must be numeric, got {h.dtype}")
    h = h.astype(complex, copy=False)
    ndims = (2, 3) if allow_batch else (2,)
    if h.ndim not in ndims:
        raise ValueError(f"CSI must have {' or '.join(map(str, ndims))} dimensions, got {h.ndim}")
    if not np.all(np.isfinite(h)):
        raise ValueError("CSI contains non-finite values")
    return h


def check_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    if w.ndim != 2:
        raise ValueError("precoder weights must be (num_subcarriers, num_antennas)")
    if not np.all(np.isfinite(w)):
        raise ValueError("precoder weights contain non-finite values")
    return w


def check_angle(theta: float, name: str = "angle") -> float:
    theta = float(theta)
    if not np.isfinite(theta) or abs(theta) > np.pi / 2 + 1e-12:
        raise ValueError(f"{name} {theta} outside [-pi/2, pi/2]")
    return theta


def check_increasing(grid, name: str) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError(f"{name} grid needs at least two points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError(f"{name} grid must be strictly increasing")
    return grid


def unit_rows(w: np.ndarray) -> np.ndarray:
    """Scale every row to unit Euclidean norm."""
    norms = np.linalg.norm(w, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero weight vector")
    return w / norms
