"""Weighted Tchebycheff scalarisation and objective normalisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RHO = 0.05


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True)
class NormalisationState:
    """Per-objective observed range; the ideal point is the origin after normalising."""

    mins: np.ndarray
    maxs: np.ndarray

    @classmethod
    def from_objectives(cls, F) -> "NormalisationState":
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[0] < 1:
            raise ValueError("need at least one evaluated point")
        return cls(F.min(axis=0), F.max(axis=0))

    @property
    def ideal(self) -> np.ndarray:
        return np.zeros_like(self.mins)

    @property
    def span(self) -> np.ndarray:
        span = self.maxs - self.mins
        return np.where(span > 0, span, 1.0)


def normalise(objectives, state: NormalisationState) -> np.ndarray:
    """Map objectives to ``(f - min) / (max - min)`` without clamping.

    Accepts a single vector or a matrix with one objective vector per row.
    """
    F = np.asarray(objectives, dtype=float)
    return (F - state.mins) / state.span


def _weights(w):
    return w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)


def tchebycheff(f_norm, w, z=None) -> np.ndarray | float:
    """``max_i w_i (f_i - z_i)``; vectorised over leading axes of ``f_norm``."""
    f = np.asarray(f_norm, dtype=float)
    w = _weights(w)
    z = np.zeros_like(w) if z is None else np.asarray(z, dtype=float)
    if f.shape[-1] != w.size or z.size != w.size:
        raise ValueError("dimension mismatch")
    out = np.max(w * (f - z), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def augmented_tchebycheff(f_norm, w, z=None, rho: float = DEFAULT_RHO):
    """Tchebycheff term plus ``rho * sum_i w_i (f_i - z_i)``."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    f = np.asarray(f_norm, dtype=float)
    w = _weights(w)
    z = np.zeros_like(w) if z is None else np.asarray(z, dtype=float)
    if f.shape[-1] != w.size or z.size != w.size:
        raise ValueError("dimension mismatch")
    terms = w * (f - z)
    out = np.max(terms, axis=-1) + rho * np.sum(terms, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sample_weight(m: int, rng: np.random.Generator) -> WeightVector:
    """Uniform draw from the unit simplex via spacings of sorted uniforms."""
    if m < 2:
        raise ValueError("need m >= 2 objectives")
    cuts = np.sort(rng.random(m - 1))
    w = np.diff(np.concatenate([[0.0], cuts, [1.0]]))
    # absorb round-off so the sum is exactly representable as 1
    w[-1] = 1.0 - np.sum(w[:-1])
    return WeightVector(np.maximum(w, 0.0))
