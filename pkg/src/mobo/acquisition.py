"""Acquisition functions: closed-form EI, Monte Carlo EI and Monte Carlo EHVI."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import metrics
from .gp import Prediction
from .scalar_dist import GumbelParams, gumbel_quantile


@dataclass(frozen=True)
class Incumbent:
    best_scalarised: float
    best_objectives_front: np.ndarray


def ei_closed_form(mean, std, incumbent):
    """Expected improvement below ``incumbent`` for a Gaussian ``N(mean, std^2)``.

    Vectorised over ``mean`` and ``std``; zero ``std`` gives ``max(0, incumbent - mean)``.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    diff = incumbent - mean
    pos = std > 0
    safe = np.where(pos, std, 1.0)
    u = diff / safe
    ei = np.where(pos, diff * stats.norm.cdf(u) + safe * stats.norm.pdf(u), np.maximum(diff, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def ei_from_samples(samples, incumbent) -> np.ndarray:
    """Row-wise ``mean(max(0, incumbent - g))``."""
    return np.mean(np.maximum(incumbent - np.asarray(samples, dtype=float), 0.0), axis=-1)


def ei_monte_carlo(
    dist: Union[GumbelParams, np.ndarray],
    incumbent: float,
    count: int = 1000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Monte Carlo expected improvement.

    ``dist`` is either a fitted Gumbel, from which ``count`` draws are taken
    by inverse-CDF sampling, or a vector of raw samples used as they are.
    """
    if isinstance(dist, GumbelParams):
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        g = gumbel_quantile(dist.location, dist.scale, _open_uniform(rng, count))
    else:
        g = np.asarray(dist, dtype=float).ravel()
    return float(ei_from_samples(g, incumbent))


def _open_uniform(rng, shape):
    # keeps log(-log(u)) finite
    return np.clip(rng.random(shape), 1e-300, 1.0 - 1e-16)


def gumbel_ei_batch(location, scale, incumbent, uniforms) -> np.ndarray:
    """EI for many Gumbels sharing the same uniforms (common random numbers)."""
    g = gumbel_quantile(np.asarray(location)[:, None], np.asarray(scale)[:, None], uniforms[None, :])
    return ei_from_samples(g, incumbent)


def ehvi_batch(means, stds, front, ref_point, normals: np.ndarray, chunk: int = 200_000) -> np.ndarray:
    """Monte Carlo EHVI for each row of ``means``/``stds``.

    ``normals`` is a ``(count, m)`` block of standard normal draws shared by
    every candidate. Rows with all-zero ``std`` are evaluated exactly.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    stds = np.atleast_2d(np.asarray(stds, dtype=float))
    lower, upper = metrics.nondominated_cells(front, ref_point)
    out = np.empty(means.shape[0])
    count = normals.shape[0]
    per = max(1, chunk // max(1, count * lower.shape[0]))
    for start in range(0, means.shape[0], per):
        mu = means[start: start + per]
        sd = stds[start: start + per]
        F = mu[:, None, :] + sd[:, None, :] * normals[None, :, :]
        hvi = metrics.improvement_from_cells(F.reshape(-1, mu.shape[1]), lower, upper)
        out[start: start + per] = hvi.reshape(mu.shape[0], count).mean(axis=1)
    exact = np.all(stds == 0, axis=1)
    if exact.any():
        out[exact] = metrics.improvement_from_cells(means[exact], lower, upper)
    return out


def ehvi(
    predictions: Sequence[Prediction],
    front,
    ref_point,
    count: int = 1000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Expected hypervolume improvement of a candidate with independent Gaussian objectives."""
    ref = np.asarray(ref_point, dtype=float).ravel()
    P = np.atleast_2d(np.asarray(front, dtype=float)) if np.size(front) else np.empty((0, ref.size))
    if P.shape[0] and np.any(P >= ref):
        raise ValueError("reference point must be strictly dominated by every front member")
    if len(predictions) != ref.size:
        raise ValueError("need one prediction per objective")
    mu = np.array([p.mean for p in predictions])
    sd = np.array([p.std for p in predictions])
    if np.all(sd == 0):
        return float(ehvi_batch(mu, sd, P, ref, np.zeros((1, ref.size)))[0])
    rng = rng if rng is not None else np.random.default_rng(0)
    normals = rng.standard_normal((count, ref.size))
    return float(ehvi_batch(mu, sd, P, ref, normals)[0])
