"""Distribution of the Tchebycheff value under independent Gaussian objectives.

For ``g = max_i w_i (f_i - z_i)`` with ``f_i ~ N(mu_i, sigma_i^2)`` each term
is Gaussian with mean ``m_i = w_i (mu_i - z_i)`` and standard deviation
``s_i = w_i sigma_i``, so the CDF of ``g`` is the product of the component
CDFs. This module evaluates that density exactly, samples from it, and fits
two cheaper surrogates: a Gumbel (max-type) distribution by maximum
likelihood and a Gaussian Laplace approximation at the mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special, stats

from .optimizers import safeguarded_newton_1d

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
EULER_GAMMA = np.euler_gamma


class GumbelFitError(RuntimeError):
    pass


class LaplaceFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalarisedPosterior:
    shifted_means: np.ndarray
    scaled_stds: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.shifted_means, dtype=float))
        s = np.atleast_1d(np.asarray(self.scaled_stds, dtype=float))
        if m.shape != s.shape or m.ndim != 1 or m.size < 1:
            raise ValueError("means and stds must be equal-length vectors")
        if np.any(s < 0):
            raise ValueError("standard deviations must be non-negative")
        # floor keeps the density defined when a GP is nearly certain
        s = np.maximum(s, 1e-9 * np.maximum(1.0, np.abs(m)))
        object.__setattr__(self, "shifted_means", m)
        object.__setattr__(self, "scaled_stds", s)

    @classmethod
    def from_predictions(cls, means, stds, weights, ideal=None) -> "ScalarisedPosterior":
        means = np.asarray(means, dtype=float)
        weights = np.asarray(weights, dtype=float)
        ideal = np.zeros_like(means) if ideal is None else np.asarray(ideal, dtype=float)
        return cls(weights * (means - ideal), weights * np.asarray(stds, dtype=float))

    @property
    def m(self) -> int:
        return self.shifted_means.size

    def support_hint(self, width: float) -> tuple[float, float]:
        smax = float(self.scaled_stds.max())
        return (float(self.shifted_means.min()) - width * smax,
                float(self.shifted_means.max()) + width * smax)


def _standardised(sp: ScalarisedPosterior, g):
    g = np.asarray(g, dtype=float)
    return (g[..., None] - sp.shifted_means) / sp.scaled_stds


def log_exact_pdf(sp: ScalarisedPosterior, g):
    """Log density of the max of independent Gaussians (vectorised over ``g``)."""
    u = _standardised(sp, g)
    log_cdf = special.log_ndtr(u)
    log_phi = -0.5 * u ** 2 - LOG_SQRT_2PI
    terms = log_phi - log_cdf - np.log(sp.scaled_stds)
    return special.logsumexp(terms, axis=-1) + np.sum(log_cdf, axis=-1)


def exact_pdf(sp: ScalarisedPosterior, g):
    """``sum_i (1/s_i) phi(u_i)/Phi(u_i) * prod_j Phi(u_j)`` with ``u_i = (g - m_i)/s_i``."""
    out = np.exp(log_exact_pdf(sp, g))
    return float(out) if np.ndim(out) == 0 else out


def exact_cdf(sp: ScalarisedPosterior, g):
    """``prod_i Phi((g - m_i)/s_i)``."""
    out = np.exp(np.sum(special.log_ndtr(_standardised(sp, g)), axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def sample(sp: ScalarisedPosterior, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` values of ``max_i N(m_i, s_i^2)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    z = rng.standard_normal((count, sp.m))
    return np.max(sp.shifted_means + sp.scaled_stds * z, axis=1)


@dataclass(frozen=True)
class GumbelParams:
    """Max-type Gumbel with density ``exp(-(t + exp(-t))) / scale``, ``t = (g - location)/scale``."""

    location: float
    scale: float
    iterations: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Gumbel scale must be positive")


def gumbel_pdf(p: GumbelParams, g):
    t = (np.asarray(g, dtype=float) - p.location) / p.scale
    with np.errstate(over="ignore"):
        out = np.exp(-(t + np.exp(-t))) / p.scale
    return float(out) if np.ndim(out) == 0 else out


def gumbel_cdf(p: GumbelParams, g):
    t = (np.asarray(g, dtype=float) - p.location) / p.scale
    with np.errstate(over="ignore"):
        out = np.exp(-np.exp(-t))
    return float(out) if np.ndim(out) == 0 else out


def gumbel_log_likelihood(samples, location: float, scale: float) -> float:
    g = np.asarray(samples, dtype=float)
    t = (g - location) / scale
    return float(-g.size * np.log(scale) - np.sum(t) - np.sum(np.exp(-t)))


def moment_gumbel(samples) -> tuple[float, float]:
    """Method-of-moments location and scale."""
    g = np.asarray(samples, dtype=float)
    scale = float(np.std(g, ddof=1)) * np.sqrt(6.0) / np.pi
    return float(np.mean(g)) - EULER_GAMMA * scale, scale


def fit_gumbel_batch(samples, max_iter: int = 200, rtol: float = 1e-8):
    """Gumbel maximum likelihood fits for every row of ``samples``.

    Solves the scale equation ``beta = mean(g) - sum(g e^{-g/beta}) / sum(e^{-g/beta})``
    by fixed-point iteration from the moment estimate, halving steps on rows
    whose updates change sign, then sets
    ``location = -beta log(mean(e^{-g/beta}))``.

    Returns ``(location, scale, iterations)`` arrays. Rows that fail to
    converge within ``max_iter`` get ``iterations == -1``.
    """
    G = np.atleast_2d(np.asarray(samples, dtype=float))
    n_rows, n = G.shape
    if n < 10:
        raise GumbelFitError("need at least 10 samples")
    g_mean = G.mean(axis=1)
    g_min = G.min(axis=1)
    spread = G.std(axis=1, ddof=1)
    constant = ~(spread > 1e-12 * np.maximum(1.0, np.abs(g_mean)))
    # centring on the row minimum keeps the exponentials in range
    D = G - g_min[:, None]
    d_mean = g_mean - g_min

    beta = np.where(constant, 1.0, spread * np.sqrt(6.0) / np.pi)
    iterations = np.full(n_rows, -1, dtype=int)
    done = constant.copy()
    damping = np.ones(n_rows)
    last_step = np.zeros(n_rows)

    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        b = beta[idx]
        E = np.exp(-D[idx] / b[:, None])
        target = d_mean[idx] - np.sum(D[idx] * E, axis=1) / np.sum(E, axis=1)
        step = target - b
        flipped = step * last_step[idx] < 0
        damping[idx] = np.where(flipped, 0.5, damping[idx])
        b_new = b + damping[idx] * step
        b_new = np.where(b_new > 0, b_new, 0.5 * b)
        beta[idx] = b_new
        last_step[idx] = step
        conv = np.abs(b_new - b) < rtol * b_new
        iterations[idx[conv]] = it
        done[idx[conv]] = True

    E = np.exp(-D / beta[:, None])
    location = g_min - beta * np.log(np.mean(E, axis=1))
    location = np.where(constant, np.nan, location)
    beta = np.where(constant, np.nan, beta)
    iterations = np.where(constant, -2, iterations)
    return location, beta, iterations


def fit_gumbel(samples, max_iter: int = 200, rtol: float = 1e-8) -> GumbelParams:
    """Maximum likelihood Gumbel fit for a 1-D sample."""
    g = np.asarray(samples, dtype=float).ravel()
    if g.size < 10:
        raise GumbelFitError("need at least 10 samples")
    loc, scale, its = fit_gumbel_batch(g[None, :], max_iter=max_iter, rtol=rtol)
    if its[0] == -2:
        raise GumbelFitError("samples are constant")
    if its[0] == -1:
        raise GumbelFitError(f"scale iteration did not converge in {max_iter} iterations")
    return GumbelParams(float(loc[0]), float(scale[0]), int(its[0]))


def gumbel_quantile(location, scale, u):
    """Inverse CDF; broadcasts ``location``/``scale`` against uniforms ``u``."""
    return location - scale * np.log(-np.log(u))


@dataclass(frozen=True)
class LaplaceParams:
    mode: float
    precision: float

    def __post_init__(self):
        if not self.precision > 0:
            raise ValueError("precision must be positive")

    @property
    def std(self) -> float:
        return float(1.0 / np.sqrt(self.precision))


def log_pdf_derivative(sp: ScalarisedPosterior, g: float, h: Optional[float] = None) -> float:
    """Central difference of ``log exact_pdf``."""
    h = 1e-5 * float(sp.scaled_stds.max()) if h is None else h
    return float((log_exact_pdf(sp, g + h) - log_exact_pdf(sp, g - h)) / (2.0 * h))


def log_pdf_curvature(sp: ScalarisedPosterior, g: float, h: Optional[float] = None) -> float:
    """Second central difference of ``log exact_pdf``.

    The default step is wider than the first-derivative step because the
    second difference divides round-off by ``h**2``.
    """
    h = 1e-3 * float(sp.scaled_stds.max()) if h is None else h
    f0 = log_exact_pdf(sp, g)
    return float((log_exact_pdf(sp, g + h) - 2.0 * f0 + log_exact_pdf(sp, g - h)) / h ** 2)


def laplace_fit(sp: ScalarisedPosterior, tol: float = 1e-8) -> LaplaceParams:
    """Gaussian approximation ``N(g0, 1/A)`` at the mode of the exact density."""
    lo, hi = sp.support_hint(6.0)
    d = lambda g: log_pdf_derivative(sp, g)
    try:
        g0 = safeguarded_newton_1d(d, (lo, hi), tol=tol, second_derivative=lambda g: log_pdf_curvature(sp, g))
    except ValueError as exc:
        raise LaplaceFitError(str(exc)) from exc
    A = -log_pdf_curvature(sp, g0)
    if not A > 0:
        raise LaplaceFitError("non-concave at mode")
    return LaplaceParams(float(g0), float(A))


def laplace_pdf(p: LaplaceParams, g):
    out = stats.norm.pdf(g, loc=p.mode, scale=p.std)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GaussianityReport:
    m: int
    sample_count: int
    mean: float
    std: float
    skewness: float
    ks_gaussian: float
    ks_gumbel: float
    gumbel_location: float
    gumbel_scale: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def gaussianity_report(sp: ScalarisedPosterior, sample_count: int = 100_000,
                       rng: Optional[np.random.Generator] = None) -> GaussianityReport:
    """Skewness and KS distances of the sampled distribution to a moment-matched
    Gaussian and to a maximum likelihood Gumbel."""
    if sample_count < 10_000:
        raise ValueError("sample_count must be >= 1e4")
    rng = rng if rng is not None else np.random.default_rng(0)
    g = sample(sp, sample_count, rng)
    mean, std = float(np.mean(g)), float(np.std(g, ddof=1))
    ks_gauss = stats.kstest(g, stats.norm(loc=mean, scale=std).cdf).statistic
    gp = fit_gumbel(g)
    ks_gum = stats.kstest(g, lambda x: gumbel_cdf(gp, x)).statistic
    return GaussianityReport(
        m=sp.m, sample_count=sample_count, mean=mean, std=std,
        skewness=float(stats.skew(g)), ks_gaussian=float(ks_gauss), ks_gumbel=float(ks_gum),
        gumbel_location=gp.location, gumbel_scale=gp.scale,
    )
