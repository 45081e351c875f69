"""Inner optimisers.

Acquisition functions are maximised with a real-coded genetic algorithm and
GP hyperparameters with bounded quasi-Newton steps. A safeguarded 1-D
Newton solver finds the Laplace mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize


@dataclass(frozen=True)
class GaConfig:
    """Settings of the real-coded GA.

    ``mutation_prob=None`` means the usual ``1/n`` per-gene rate.
    """

    population: int = 100
    generations: int = 100
    crossover_prob: float = 0.9
    mutation_prob: Optional[float] = None
    sbx_eta: float = 15.0
    pm_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if self.sbx_eta <= 0 or self.pm_eta <= 0:
            raise ValueError("distribution indices must be positive")


@dataclass
class GaResult:
    x: np.ndarray
    value: float
    history: np.ndarray  # best-so-far value after each generation


def _sbx(p1, p2, lo, hi, eta, prob, rng):
    """Bounded simulated binary crossover on two parent matrices."""
    n_pairs, n = p1.shape
    c1, c2 = p1.copy(), p2.copy()
    do_pair = rng.random(n_pairs) < prob
    do_gene = rng.random((n_pairs, n)) < 0.5
    u = rng.random((n_pairs, n))

    y1 = np.minimum(p1, p2)
    y2 = np.maximum(p1, p2)
    span = y2 - y1
    active = do_pair[:, None] & do_gene & (span > 1e-14)
    safe_span = np.where(span > 1e-14, span, 1.0)

    def _betaq(beta):
        alpha = 2.0 - beta ** -(eta + 1.0)
        low = u <= 1.0 / alpha
        with np.errstate(invalid="ignore", divide="ignore"):
            bq = np.where(
                low,
                (u * alpha) ** (1.0 / (eta + 1.0)),
                (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0)),
            )
        return bq

    beta_lo = 1.0 + 2.0 * (y1 - lo) / safe_span
    beta_hi = 1.0 + 2.0 * (hi - y2) / safe_span
    child_lo = 0.5 * (y1 + y2 - _betaq(beta_lo) * span)
    child_hi = 0.5 * (y1 + y2 + _betaq(beta_hi) * span)
    child_lo = np.clip(child_lo, lo, hi)
    child_hi = np.clip(child_hi, lo, hi)

    swap = rng.random((n_pairs, n)) < 0.5
    a = np.where(swap, child_hi, child_lo)
    b = np.where(swap, child_lo, child_hi)
    c1 = np.where(active, a, c1)
    c2 = np.where(active, b, c2)
    return c1, c2


def _polynomial_mutation(x, lo, hi, eta, rate, rng):
    mutate = rng.random(x.shape) < rate
    u = rng.random(x.shape)
    width = hi - lo
    d1 = (x - lo) / width
    d2 = (hi - x) / width
    power = 1.0 / (eta + 1.0)
    left = u < 0.5
    val_l = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
    val_r = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
    delta = np.where(left, val_l ** power - 1.0, 1.0 - val_r ** power)
    out = np.where(mutate, x + delta * width, x)
    return np.clip(out, lo, hi)


def ga_maximise(
    objective: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    cfg: GaConfig = GaConfig(),
    vectorized: bool = True,
    initial: Optional[np.ndarray] = None,
) -> GaResult:
    """Maximise ``objective`` over the box ``[lo, hi]`` with a real-coded GA.

    Binary tournament selection, SBX crossover, polynomial mutation and
    single-individual elitism. With ``vectorized=True`` the objective receives
    the whole ``(population, n)`` matrix and must return ``population`` values;
    otherwise it is called once per row. ``initial`` rows, if given, replace
    the first members of the random starting population.

    The returned point is the best individual evaluated over the whole run.
    """
    lo = np.asarray(lo, dtype=float).ravel()
    hi = np.asarray(hi, dtype=float).ravel()
    if lo.shape != hi.shape or np.any(lo >= hi):
        raise ValueError("need lo < hi componentwise")
    n = lo.size
    rng = np.random.default_rng(cfg.seed)
    rate = cfg.mutation_prob if cfg.mutation_prob is not None else 1.0 / n

    if vectorized:
        evaluate = lambda pop: np.asarray(objective(pop), dtype=float).reshape(-1)
    else:
        evaluate = lambda pop: np.array([float(objective(row)) for row in pop])

    def _fitness(pop):
        vals = evaluate(pop)
        # NaN would poison comparisons; treat as worst
        return np.where(np.isnan(vals), -np.inf, vals)

    pop = lo + (hi - lo) * rng.random((cfg.population, n))
    if initial is not None:
        initial = np.clip(np.atleast_2d(np.asarray(initial, dtype=float)), lo, hi)
        k = min(len(initial), cfg.population)
        pop[:k] = initial[:k]
    fit = _fitness(pop)

    best_i = int(np.argmax(fit))
    best_x, best_f = pop[best_i].copy(), fit[best_i]
    history = np.empty(cfg.generations)

    half = cfg.population // 2
    for gen in range(cfg.generations):
        # binary tournaments, ties go to the lower index for determinism
        a = rng.integers(0, cfg.population, size=cfg.population)
        b = rng.integers(0, cfg.population, size=cfg.population)
        winners = np.where(fit[a] >= fit[b], a, b)
        parents = pop[winners]
        c1, c2 = _sbx(parents[:half], parents[half:], lo, hi, cfg.sbx_eta, cfg.crossover_prob, rng)
        children = np.vstack([c1, c2])
        children = _polynomial_mutation(children, lo, hi, cfg.pm_eta, rate, rng)
        child_fit = _fitness(children)

        # elitism: the previous generation's best replaces the worst child
        elite = int(np.argmax(fit))
        worst = int(np.argmin(child_fit))
        children[worst] = pop[elite]
        child_fit[worst] = fit[elite]
        pop, fit = children, child_fit

        i = int(np.argmax(fit))
        if fit[i] > best_f:
            best_x, best_f = pop[i].copy(), fit[i]
        history[gen] = best_f

    return GaResult(x=best_x, value=float(best_f), history=history)


@dataclass
class QuasiNewtonResult:
    x: np.ndarray
    value: float
    converged: bool
    iterations: int


def numeric_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        grad[j] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return grad


def quasi_newton_maximise(
    objective: Callable[[np.ndarray], float],
    x0,
    bounds,
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_iter: int = 200,
    h: float = 1e-6,
    gtol: float = 1e-6,
    ftol: float = 1e-10,
) -> QuasiNewtonResult:
    """Maximise a smooth function inside a box with bounded quasi-Newton steps.

    ``bounds`` is a sequence of ``(low, high)`` pairs. Without ``gradient``,
    central differences with step ``h`` are used. The result never scores
    below ``x0``; a failed line search is reported via ``converged=False``.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if np.any(x0 < bounds[:, 0]) or np.any(x0 > bounds[:, 1]):
        raise ValueError("x0 lies outside bounds")

    def neg(x):
        v = objective(x)
        return np.inf if not np.isfinite(v) else -float(v)

    if gradient is None:
        def neg_grad(x):
            return -numeric_gradient(objective, x, h)
    else:
        def neg_grad(x):
            return -np.asarray(gradient(x), dtype=float)

    f0 = objective(x0)
    res = optimize.minimize(
        neg, x0, jac=neg_grad, method="L-BFGS-B",
        bounds=[tuple(b) for b in bounds],
        options={"maxiter": max_iter, "gtol": gtol, "ftol": ftol},
    )
    x = np.clip(res.x, bounds[:, 0], bounds[:, 1])
    value = objective(x)
    if not np.isfinite(value) or (np.isfinite(f0) and value < f0):
        return QuasiNewtonResult(x0.copy(), float(f0), False, int(res.nit))
    return QuasiNewtonResult(x, float(value), bool(res.success), int(res.nit))


def safeguarded_newton_1d(
    derivative: Callable[[float], float],
    bracket: tuple[float, float],
    tol: float = 1e-8,
    second_derivative: Optional[Callable[[float], float]] = None,
    max_iter: int = 200,
) -> float:
    """Find a root of ``derivative`` inside ``bracket``.

    Newton steps use ``second_derivative`` (or a secant estimate from the
    current bracket) and fall back to bisection whenever a step leaves the
    bracket or fails to shrink it fast enough.
    """
    a, b = float(bracket[0]), float(bracket[1])
    if a > b:
        a, b = b, a
    da, db = derivative(a), derivative(b)
    if da == 0.0:
        return a
    if db == 0.0:
        return b
    if np.sign(da) == np.sign(db):
        raise ValueError("derivative has no sign change in bracket")

    x = 0.5 * (a + b)
    dx = derivative(x)
    best_x, best_abs = x, abs(dx)
    width_prev = b - a
    for _ in range(max_iter):
        if abs(dx) < tol:
            return x
        # keep the root bracketed
        if np.sign(dx) == np.sign(da):
            a, da = x, dx
        else:
            b, db = x, dx
        if second_derivative is not None:
            d2 = second_derivative(x)
        else:
            d2 = (db - da) / (b - a)
        step_ok = d2 != 0.0 and np.isfinite(d2)
        x_new = x - dx / d2 if step_ok else np.nan
        if not (step_ok and a < x_new < b) or (b - a) > 0.5 * width_prev:
            x_new = 0.5 * (a + b)
        width_prev = b - a
        if x_new == x or b - a <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            break
        x = x_new
        dx = derivative(x)
        if abs(dx) < best_abs:
            best_x, best_abs = x, abs(dx)
    return best_x
