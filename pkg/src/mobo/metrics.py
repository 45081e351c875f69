"""Pareto filtering, archives and exact hypervolume (minimisation)."""

from __future__ import annotations

import numpy as np


def dominates(a, b) -> bool:
    """Weak Pareto dominance with at least one strict improvement."""
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_mask(points) -> np.ndarray:
    """Mask of rows not dominated by any other row; duplicates keep their first copy."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    n = P.shape[0]
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if not keep[i]:
            continue
        others = P[keep]
        le = np.all(others <= P[i], axis=1)
        lt = np.any(others < P[i], axis=1)
        if np.any(le & lt):
            keep[i] = False
            continue
        # drop later rows that P[i] dominates or duplicates
        later = np.arange(i + 1, n)
        later = later[keep[later]]
        if later.size:
            q = P[later]
            covered = np.all(P[i] <= q, axis=1)
            keep[later[covered]] = False
    return keep


def nondominated_filter(points) -> np.ndarray:
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] == 0:
        return P
    return P[nondominated_mask(P)]


def _hv2d(P, ref):
    P = P[np.argsort(P[:, 0], kind="stable")]
    area, prev_y = 0.0, ref[1]
    for x, y in P:
        if y < prev_y:
            area += (ref[0] - x) * (prev_y - y)
            prev_y = y
    return area


def _hv_slice(P, ref):
    m = P.shape[1]
    if m == 1:
        return float(ref[0] - P[:, 0].min())
    if m == 2:
        return _hv2d(P, ref)
    # sweep the last objective, measuring (m-1)-D slices between levels
    P = P[np.argsort(P[:, -1], kind="stable")]
    levels = np.append(P[:, -1], ref[-1])
    vol = 0.0
    for i in range(P.shape[0]):
        depth = levels[i + 1] - levels[i]
        if depth <= 0:
            continue
        active = nondominated_filter(P[: i + 1, :-1])
        vol += depth * _hv_slice(active, ref[:-1])
    return vol


def hypervolume(front, ref_point) -> float:
    """Lebesgue measure dominated by ``front`` and bounded by ``ref_point``.

    Sorted sweep for two objectives; for more, slices along the last
    objective reduce the problem to lower-dimensional sweeps.
    """
    ref = np.asarray(ref_point, dtype=float).ravel()
    P = np.asarray(front, dtype=float)
    if P.size == 0:
        return 0.0
    P = np.atleast_2d(P)
    if P.shape[1] != ref.size:
        raise ValueError("dimension mismatch between front and reference point")
    if np.any(P >= ref):
        raise ValueError("every front member must strictly dominate the reference point")
    return float(_hv_slice(nondominated_filter(P), ref))


def hypervolume_of(points, ref_point) -> float:
    """Hypervolume of an arbitrary point set: points outside the reference box are ignored."""
    ref = np.asarray(ref_point, dtype=float).ravel()
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.size == 0:
        return 0.0
    inside = np.all(P < ref, axis=1)
    return hypervolume(P[inside], ref) if inside.any() else 0.0


class ParetoArchive:
    """Mutually nondominated points that strictly dominate a fixed reference point."""

    def __init__(self, ref_point, points=None):
        self.ref_point = np.asarray(ref_point, dtype=float).ravel()
        self.points = np.empty((0, self.ref_point.size))
        if points is not None:
            for p in np.atleast_2d(points):
                self.add(p)

    def __len__(self):
        return self.points.shape[0]

    def add(self, point) -> bool:
        """Insert ``point`` if it is inside the reference box and nondominated."""
        p = np.asarray(point, dtype=float).ravel()
        if not np.all(p < self.ref_point):
            return False
        P = self.points
        if P.shape[0] and np.any(np.all(P <= p, axis=1)):
            return False
        survivors = ~np.all(p <= P, axis=1) if P.shape[0] else np.ones(0, dtype=bool)
        self.points = np.vstack([P[survivors], p])
        return True

    def hypervolume(self) -> float:
        return hypervolume(self.points, self.ref_point) if len(self) else 0.0


def nondominated_cells(front, ref_point):
    """Disjoint boxes covering the part of ``(-inf, ref]`` not dominated by ``front``.

    Returns ``(lower, upper)`` arrays; lower corners may be ``-inf``. The
    improvement of a point ``p`` is then
    ``sum_cells prod_k max(0, upper_k - max(lower_k, p_k))``.
    """
    ref = np.asarray(ref_point, dtype=float).ravel()
    m = ref.size
    P = np.atleast_2d(np.asarray(front, dtype=float)) if np.size(front) else np.empty((0, m))
    P = nondominated_filter(P) if P.shape[0] else P
    if P.shape[0] and np.any(P >= ref):
        raise ValueError("front members must strictly dominate the reference point")
    if P.shape[0] == 0:
        return np.full((1, m), -np.inf), ref[None, :].copy()

    if m == 2:
        P = P[np.argsort(P[:, 0])]
        xs = np.concatenate([[-np.inf], P[:, 0]])
        xe = np.concatenate([P[:, 0], [ref[0]]])
        ye = np.concatenate([[ref[1]], P[:, 1]])
        lower = np.column_stack([xs, np.full(xs.size, -np.inf)])
        upper = np.column_stack([xe, ye])
        keep = np.all(upper > lower, axis=1)
        return lower[keep], upper[keep]

    # general m: grid cells from the coordinates of the front, minus dominated ones
    axes = [np.concatenate([[-np.inf], np.unique(P[:, k]), [ref[k]]]) for k in range(m)]
    idx = np.stack(np.meshgrid(*[np.arange(a.size - 1) for a in axes], indexing="ij"), -1).reshape(-1, m)
    lower = np.column_stack([axes[k][idx[:, k]] for k in range(m)])
    upper = np.column_stack([axes[k][idx[:, k] + 1] for k in range(m)])
    dominated = np.zeros(lower.shape[0], dtype=bool)
    for q in P:
        dominated |= np.all(q <= lower, axis=1)
    return lower[~dominated], upper[~dominated]


def improvement_from_cells(points, lower, upper) -> np.ndarray:
    """Hypervolume improvement of each row of ``points`` given a cell decomposition."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    widths = upper[None, :, :] - np.maximum(lower[None, :, :], X[:, None, :])
    return np.prod(np.clip(widths, 0.0, None), axis=2).sum(axis=1)
