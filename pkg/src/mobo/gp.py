"""Zero-mean Gaussian process regression with an ARD squared-exponential kernel."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .optimizers import quasi_newton_maximise

log = logging.getLogger(__name__)

JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
LOG_2PI = np.log(2.0 * np.pi)


class NonPDKernelError(np.linalg.LinAlgError):
    pass


class GpFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    """Kernel hyperparameters ``(signal_std, lengthscales, noise_std)``."""

    signal_std: float
    lengthscales: np.ndarray
    noise_std: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if self.signal_std <= 0 or np.any(ls <= 0) or self.noise_std < 0:
            raise ValueError("hyperparameters must be positive (noise_std >= 0)")

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_log(self) -> np.ndarray:
        """Pack as ``[log sf, log l_1..l_n, log sn]``; zero noise maps to a tiny floor."""
        return np.concatenate([
            [np.log(self.signal_std)],
            np.log(self.lengthscales),
            [np.log(max(self.noise_std, 1e-300))],
        ])

    @classmethod
    def from_log(cls, theta) -> "Hyperparams":
        theta = np.asarray(theta, dtype=float)
        return cls(float(np.exp(theta[0])), np.exp(theta[1:-1]), float(np.exp(theta[-1])))


def kernel_eval(x, x_prime, hp: Hyperparams, same_point: bool = False) -> float:
    """Kernel value for one pair of inputs; ``same_point`` switches on the noise delta."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape or x.size != hp.dim:
        raise ValueError(f"dimension mismatch: {x.size}, {x_prime.size}, {hp.dim}")
    r2 = np.sum(((x - x_prime) / hp.lengthscales) ** 2)
    value = hp.signal_std ** 2 * np.exp(-0.5 * r2)
    if same_point:
        value += hp.noise_std ** 2
    return float(value)


def kernel_matrix(A: np.ndarray, B: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """Noise-free cross-covariance matrix between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(A) / hp.lengthscales
    B = np.atleast_2d(B) / hp.lengthscales
    r2 = (
        np.sum(A ** 2, axis=1)[:, None]
        + np.sum(B ** 2, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    np.maximum(r2, 0.0, out=r2)
    return hp.signal_std ** 2 * np.exp(-0.5 * r2)


def _cholesky_with_jitter(K: np.ndarray):
    """Lower Cholesky factor of ``K + jitter*I`` walking up the jitter ladder."""
    eye = np.eye(K.shape[0])
    scale = max(1.0, float(np.mean(np.diag(K))))
    last = None
    for jitter in JITTER_LADDER:
        try:
            L = linalg.cholesky(K + jitter * scale * eye, lower=True, check_finite=False)
            return L, jitter * scale
        except linalg.LinAlgError as exc:
            last = exc
    raise NonPDKernelError(f"non-PD kernel matrix ({last})")


def _sq_diffs(X):
    """Per-dimension squared differences, shape ``(n, N, N)``."""
    return (X.T[:, :, None] - X.T[:, None, :]) ** 2


def _lml_and_grad(X, y, theta, want_grad=True, D2=None):
    hp = Hyperparams.from_log(theta)
    N = X.shape[0]
    K_se = kernel_matrix(X, X, hp)
    K = K_se + hp.noise_std ** 2 * np.eye(N)
    L, _ = _cholesky_with_jitter(K)
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * N * LOG_2PI
    if not want_grad:
        return lml, None

    D2 = _sq_diffs(X) if D2 is None else D2
    Linv = linalg.lapack.dtrtri(L, lower=1)[0]
    Kinv = Linv.T @ Linv
    W = np.outer(alpha, alpha) - Kinv
    WK = W * K_se
    grad = np.empty_like(theta)
    grad[0] = np.sum(WK)
    grad[1:-1] = 0.5 * np.tensordot(D2, WK, axes=([1, 2], [0, 1])) / hp.lengthscales ** 2
    grad[-1] = np.trace(W) * hp.noise_std ** 2
    return lml, grad


def log_marginal_likelihood(X, y, hp: Hyperparams) -> float:
    """``log p(y | X, hp)`` for a zero-mean GP."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[1] != hp.dim:
        raise ValueError("dimension mismatch between inputs and lengthscales")
    lml, _ = _lml_and_grad(X, y, hp.to_log(), want_grad=False)
    return float(lml)


def log_marginal_likelihood_grad(X, y, theta) -> np.ndarray:
    """Gradient of the log marginal likelihood with respect to log-hyperparameters."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    return _lml_and_grad(X, y, np.asarray(theta, dtype=float))[1]


@dataclass(frozen=True)
class Prediction:
    mean: float
    std: float


@dataclass(frozen=True)
class GpModel:
    """A conditioned GP.

    Inputs are mapped to the unit box with ``input_lo``/``input_hi`` and
    targets are standardised with ``y_mean``/``y_scale`` before conditioning;
    ``train_inputs`` and ``train_targets`` hold the transformed data.
    """

    train_inputs: np.ndarray
    train_targets: np.ndarray
    hyperparams: Hyperparams
    chol_factor: np.ndarray
    weight_vector: np.ndarray
    jitter: float
    input_lo: np.ndarray
    input_hi: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0
    log_likelihood: float = field(default=np.nan, compare=False)

    @property
    def dim(self) -> int:
        return self.train_inputs.shape[1]

    def _to_unit(self, X):
        return (X - self.input_lo) / (self.input_hi - self.input_lo)

    def predict_batch(self, X_star) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and standard deviations at the rows of ``X_star``."""
        X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
        if X_star.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} inputs, got {X_star.shape[1]}")
        Z = self._to_unit(X_star)
        k_star = kernel_matrix(Z, self.train_inputs, self.hyperparams)
        mean = k_star @ self.weight_vector
        v = linalg.solve_triangular(self.chol_factor, k_star.T, lower=True, check_finite=False)
        var = self.hyperparams.signal_std ** 2 - np.sum(v ** 2, axis=0)
        std = np.sqrt(np.maximum(var, 0.0))
        return mean * self.y_scale + self.y_mean, std * self.y_scale


def predict(model: GpModel, x_star) -> Prediction:
    """Posterior mean and standard deviation at a single point."""
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    if x_star.ndim != 1 or x_star.size != model.dim:
        raise ValueError(f"expected a vector of length {model.dim}")
    mean, std = model.predict_batch(x_star[None, :])
    return Prediction(float(mean[0]), float(std[0]))


def condition(X, y, hp: Hyperparams, bounds=None, standardise: bool = False) -> GpModel:
    """Build a model from fixed hyperparameters.

    ``bounds`` is an ``(n, 2)`` array of box limits used to rescale inputs to
    the unit cube; without it inputs are taken as they are.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("row counts of inputs and targets differ")
    if X.shape[1] != hp.dim:
        raise ValueError("dimension mismatch between inputs and lengthscales")
    lo, hi = _box(bounds, X.shape[1])
    Z = (X - lo) / (hi - lo)
    y_mean, y_scale = _standardisation(y) if standardise else (0.0, 1.0)
    t = (y - y_mean) / y_scale
    K = kernel_matrix(Z, Z, hp) + hp.noise_std ** 2 * np.eye(len(t))
    L, jitter = _cholesky_with_jitter(K)
    w = linalg.cho_solve((L, True), t, check_finite=False)
    lml = -0.5 * t @ w - np.sum(np.log(np.diag(L))) - 0.5 * len(t) * LOG_2PI
    return GpModel(Z, t, hp, L, w, jitter, lo, hi, y_mean, y_scale, float(lml))


def _box(bounds, n):
    if bounds is None:
        return np.zeros(n), np.ones(n)
    b = np.asarray(bounds, dtype=float).reshape(n, 2)
    return b[:, 0], b[:, 1]


def _standardisation(y):
    mean = float(np.mean(y))
    std = float(np.std(y))
    return mean, (std if std > 0 else 1.0)


@dataclass(frozen=True)
class HyperBounds:
    """Log-space box for the hyperparameter search (inputs live in the unit cube)."""

    signal: tuple[float, float] = (1e-3, 1e3)
    lengthscale: tuple[float, float] = (1e-3, 1e3)
    noise: tuple[float, float] = (1e-6, 1.0)

    def log_box(self, n: int) -> np.ndarray:
        rows = [self.signal] + [self.lengthscale] * n + [self.noise]
        return np.log(np.asarray(rows, dtype=float))


def fit(
    X,
    y,
    restarts: int = 10,
    rng: Optional[np.random.Generator] = None,
    bounds=None,
    hyper_bounds: HyperBounds = HyperBounds(),
    max_iter: int = 200,
) -> GpModel:
    """Fit hyperparameters by maximising the log marginal likelihood.

    The first quasi-Newton run starts from ``sf=1, l=0.5, sn=1e-2``; the rest
    start log-uniformly inside ``hyper_bounds``. The best run wins.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("need at least two data points")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    n = X.shape[1]
    lo, hi = _box(bounds, n)
    Z = (X - lo) / (hi - lo)
    y_mean, y_scale = _standardisation(y)
    t = (y - y_mean) / y_scale

    D2 = _sq_diffs(Z)
    box = hyper_bounds.log_box(n)
    first = Hyperparams(1.0, np.full(n, 0.5), 1e-2).to_log()
    starts = [np.clip(first, box[:, 0], box[:, 1])]
    for _ in range(restarts - 1):
        starts.append(rng.uniform(box[:, 0], box[:, 1]))

    cache = {}

    def evaluate(theta):
        key = theta.tobytes()
        if key not in cache:
            cache.clear()
            try:
                cache[key] = _lml_and_grad(Z, t, theta, D2=D2)
            except NonPDKernelError:
                cache[key] = (-np.inf, np.zeros_like(theta))
        return cache[key]

    objective = lambda theta: evaluate(theta)[0]
    gradient = lambda theta: evaluate(theta)[1]

    best_theta, best_val, last_error = None, -np.inf, None
    for theta0 in starts:
        try:
            res = quasi_newton_maximise(objective, theta0, box, gradient=gradient, max_iter=max_iter)
        except (NonPDKernelError, ValueError, FloatingPointError) as exc:
            last_error = exc
            continue
        if np.isfinite(res.value) and res.value > best_val:
            best_theta, best_val = res.x, res.value
    if best_theta is None:
        raise GpFitError(f"all {restarts} restarts failed: {last_error}")

    hp = Hyperparams.from_log(best_theta)
    model = condition(Z, t, hp)
    return GpModel(
        model.train_inputs, model.train_targets, hp, model.chol_factor,
        model.weight_vector, model.jitter, lo, hi, y_mean, y_scale, model.log_likelihood,
    )
