"""DTLZ2, DTLZ5 and DTLZ7 benchmarks and Latin hypercube designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROBLEM_NAMES = ("DTLZ2", "DTLZ5", "DTLZ7")


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    num_objectives: int
    num_variables: int

    def __post_init__(self):
        name = self.name.upper()
        if name not in PROBLEM_NAMES:
            raise ValueError(f"unknown problem {self.name!r}; choose from {PROBLEM_NAMES}")
        object.__setattr__(self, "name", name)
        if self.num_objectives < 2:
            raise ValueError("num_objectives must be >= 2")
        if self.num_variables < self.num_objectives:
            raise ValueError("num_variables must be >= num_objectives")

    @property
    def bounds(self) -> np.ndarray:
        return np.tile([0.0, 1.0], (self.num_variables, 1))

    @property
    def label(self) -> str:
        return f"{self.name}_m{self.num_objectives}_n{self.num_variables}"

    def reference_point(self) -> np.ndarray:
        """Fixed reference point for hypervolume reporting.

        1.1 times the nadir of the true front: ``(1.1, ..., 1.1)`` for DTLZ2/5
        and ``(1.1, ..., 1.1, 2.2 m)`` for DTLZ7, whose last objective reaches
        ``2m`` on the front.
        """
        m = self.num_objectives
        ref = np.full(m, 1.1)
        if self.name == "DTLZ7":
            ref[-1] = 1.1 * 2 * m
        return ref


@dataclass
class Dataset:
    """The evaluated archive, grown one row at a time."""

    inputs: np.ndarray
    objectives: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.objectives = np.atleast_2d(np.asarray(self.objectives, dtype=float))
        if self.inputs.shape[0] != self.objectives.shape[0]:
            raise ValueError("inputs and objectives must have equal row counts")

    @property
    def eval_count(self) -> int:
        return self.inputs.shape[0]

    def append(self, x, f) -> None:
        self.inputs = np.vstack([self.inputs, np.asarray(x, dtype=float)[None, :]])
        self.objectives = np.vstack([self.objectives, np.asarray(f, dtype=float)[None, :]])


def _dtlz2(x, m, g):
    theta = x[..., : m - 1] * np.pi / 2.0
    return _sphere(theta, m, g)


def _sphere(theta, m, g):
    cos = np.cos(theta)
    sin = np.sin(theta)
    shape = theta.shape[:-1] + (m,)
    f = np.empty(shape)
    for j in range(m):
        # f_j: product of the first m-1-j cosines, times a sine for j > 0
        val = np.prod(cos[..., : m - 1 - j], axis=-1)
        if j > 0:
            val = val * sin[..., m - 1 - j]
        f[..., j] = (1.0 + g) * val
    return f


def evaluate(spec: ProblemSpec, x) -> np.ndarray:
    """Objective vector(s) of a DTLZ problem; rows of a matrix are evaluated independently."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.num_variables:
        raise ValueError(f"expected {spec.num_variables} variables, got {x.shape[-1]}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("decision vector outside [0, 1]^n")
    m = spec.num_objectives
    xm = x[..., m - 1:]

    if spec.name == "DTLZ2":
        g = np.sum((xm - 0.5) ** 2, axis=-1)
        return _dtlz2(x, m, g)

    if spec.name == "DTLZ5":
        g = np.sum((xm - 0.5) ** 2, axis=-1)
        theta = np.empty(x.shape[:-1] + (m - 1,))
        theta[..., 0] = x[..., 0] * np.pi / 2.0
        if m > 2:
            gg = np.asarray(g)[..., None]
            theta[..., 1:] = np.pi / (4.0 * (1.0 + gg)) * (1.0 + 2.0 * gg * x[..., 1: m - 1])
        return _sphere(theta, m, g)

    # DTLZ7: disconnected front
    k = xm.shape[-1]
    g = 1.0 + 9.0 / k * np.sum(xm, axis=-1)
    f = np.empty(x.shape[:-1] + (m,))
    f[..., : m - 1] = x[..., : m - 1]
    head = f[..., : m - 1]
    h = m - np.sum(head / (1.0 + g[..., None]) * (1.0 + np.sin(3.0 * np.pi * head)), axis=-1)
    f[..., m - 1] = (1.0 + g) * h
    return f


def lhs_sample(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube design in ``[0, 1)^n``: one point per stratum on every axis."""
    if count < 1:
        raise ValueError("count must be >= 1")
    strata = np.argsort(rng.random((count, n)), axis=0)
    return (strata + rng.random((count, n))) / count
