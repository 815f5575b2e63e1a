"""Gaussian-process primitives: kernel, polynomial mean, conditioning.

Everything here is a pure function of its inputs plus an explicit
``numpy.random.Generator``; nothing holds global state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import InvalidArgumentError, NotPositiveDefiniteError

MAX_MEAN_DEGREE = 2


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel hyperparameters."""

    scale_factor: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        if not (self.scale_factor > 0 and np.isfinite(self.scale_factor)):
            raise InvalidArgumentError(f"scale_factor must be positive, got {self.scale_factor}")
        if not (self.length_scale > 0 and np.isfinite(self.length_scale)):
            raise InvalidArgumentError(f"length_scale must be positive, got {self.length_scale}")


@dataclass(frozen=True)
class MeanParams:
    """Polynomial mean coefficients, lowest order first."""

    coefficients: tuple = (0.0,)

    def __post_init__(self):
        coefs = tuple(float(c) for c in np.atleast_1d(self.coefficients))
        if not 1 <= len(coefs) <= MAX_MEAN_DEGREE + 1:
            raise InvalidArgumentError(
                f"mean degree must be in 0..{MAX_MEAN_DEGREE}, got {len(coefs) - 1}"
            )
        if not all(np.isfinite(coefs)):
            raise InvalidArgumentError("mean coefficients must be finite")
        object.__setattr__(self, "coefficients", coefs)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @classmethod
    def zero(cls, degree: int = 0) -> "MeanParams":
        return cls((0.0,) * (degree + 1))


@dataclass(frozen=True)
class ThetaGrid:
    """Evenly spaced evaluation grid ``lower, lower + step, ..., upper``.

    A grid whose bounds are symmetric about zero is built exactly
    symmetric, so that reversing the point order negates every point
    bit-for-bit. The reflection post-processing relies on this.
    """

    lower: float = -5.0
    upper: float = 5.0
    step: float = 0.01
    _n: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper) and np.isfinite(self.step)):
            raise InvalidArgumentError("grid bounds and step must be finite")
        if self.step <= 0:
            raise InvalidArgumentError(f"grid step must be positive, got {self.step}")
        if self.upper <= self.lower:
            raise InvalidArgumentError("grid upper bound must exceed lower bound")
        n_steps = (self.upper - self.lower) / self.step
        if abs(n_steps - round(n_steps)) > 1e-6:
            raise InvalidArgumentError(
                f"grid span {self.upper - self.lower} is not a multiple of step {self.step}"
            )
        object.__setattr__(self, "_n", int(round(n_steps)) + 1)

    @cached_property
    def points(self) -> np.ndarray:
        pts = self.lower + self.step * np.arange(self._n)
        pts[-1] = self.upper
        if self.is_symmetric:
            pts = 0.5 * (pts - pts[::-1])
        pts.setflags(write=False)
        return pts

    @property
    def is_symmetric(self) -> bool:
        return abs(self.lower + self.upper) <= 1e-12 * max(1.0, abs(self.lower))

    def __len__(self) -> int:
        return self._n

    def index_of(self, theta) -> np.ndarray | int:
        """Index of the nearest grid point (values outside the grid are clipped)."""
        idx = np.rint((np.asarray(theta, dtype=float) - self.lower) / self.step)
        idx = np.clip(idx, 0, self._n - 1).astype(np.intp)
        return int(idx) if idx.ndim == 0 else idx

    def snap(self, theta):
        return self.points[self.index_of(theta)]

    def contains(self, theta, tol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all((theta >= self.lower - tol) & (theta <= self.upper + tol)))


@dataclass(frozen=True)
class GridFunction:
    """Values of a function at every point of a ``ThetaGrid``."""

    grid: ThetaGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise InvalidArgumentError(
                f"expected {len(self.grid)} values for the grid, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    def __call__(self, theta):
        return self.values[self.grid.index_of(theta)]

    def reflected(self) -> "GridFunction":
        return GridFunction(self.grid, self.values[::-1].copy())


def sq_exp_cov(a, b, params: KernelParams = KernelParams()) -> np.ndarray:
    """Squared-exponential covariance ``sf^2 exp(-(a_p - b_q)^2 / (2 l^2))``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidArgumentError("kernel inputs must be finite")
    d = (a[:, None] - b[None, :]) / params.length_scale
    return params.scale_factor**2 * np.exp(-0.5 * d * d)


def poly_mean(thetas, params) -> np.ndarray:
    """Evaluate ``sum_d coef_d * theta**d``.

    ``params`` may be a ``MeanParams`` or a plain coefficient sequence.
    """
    coefs = params.coefficients if isinstance(params, MeanParams) else params
    coefs = np.atleast_1d(np.asarray(coefs, dtype=float))
    thetas = np.asarray(thetas, dtype=float)
    out = np.zeros_like(thetas, dtype=float)
    for c in coefs[::-1]:
        out = out * thetas + c
    return out


def jitter_ladder(max_jitter: float):
    yield 0.0
    j = 1e-10
    while j <= max_jitter * (1 + 1e-12):
        yield j
        j *= 10.0


def chol_psd(cov, max_jitter: float = 1e-4, context: str | None = None):
    """Cholesky factor of a symmetric PSD matrix with an escalating diagonal jitter.

    Tries jitter 0, 1e-10, 1e-9, ... up to ``max_jitter`` and returns
    ``(L, jitter)`` for the first value that factorizes.

    Raises
    ------
    NotPositiveDefiniteError
        If ``cov + max_jitter * I`` still fails to factorize.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidArgumentError(f"covariance must be square, got shape {cov.shape}")
    n = cov.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    eye = np.eye(n)
    for jitter in jitter_ladder(max_jitter):
        try:
            return np.linalg.cholesky(cov + jitter * eye if jitter else cov), jitter
        except np.linalg.LinAlgError:
            continue
    where = f" for {context}" if context else ""
    raise NotPositiveDefiniteError(
        f"matrix is not positive definite{where} even with jitter {max_jitter:g}"
    )


def mvn_sample(mean, chol, rng: np.random.Generator) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    z = rng.standard_normal(mean.shape[0])
    return mean + np.asarray(chol) @ z


def gp_condition(
    theta_obs,
    f_obs,
    theta_star,
    mean=MeanParams(),
    kernel: KernelParams = KernelParams(),
    max_jitter: float = 1e-4,
):
    """Posterior mean and covariance of a GP at ``theta_star`` given noiseless values.

    Returns ``(m_star, C_star)`` with::

        m_star = mu(theta_star) + K(*, o) K(o, o)^-1 (f_obs - mu(theta_obs))
        C_star = K(*, *) - K(*, o) K(o, o)^-1 K(o, *)

    ``K(o, o)`` is inverted through ``chol_psd``; ``C_star`` is returned
    symmetrized.
    """
    theta_obs = np.atleast_1d(np.asarray(theta_obs, dtype=float))
    f_obs = np.atleast_1d(np.asarray(f_obs, dtype=float))
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    if theta_obs.shape != f_obs.shape:
        raise InvalidArgumentError("theta_obs and f_obs must have equal length")

    m_star = poly_mean(theta_star, mean)
    k_ss = sq_exp_cov(theta_star, theta_star, kernel)
    if theta_obs.size == 0:
        return m_star, k_ss

    chol, _ = chol_psd(sq_exp_cov(theta_obs, theta_obs, kernel), max_jitter, "observed points")
    k_os = sq_exp_cov(theta_obs, theta_star, kernel)
    alpha = cho_solve((chol, True), f_obs - poly_mean(theta_obs, mean))
    m_star = m_star + k_os.T @ alpha
    v = solve_triangular(chol, k_os, lower=True)
    c_star = k_ss - v.T @ v
    return m_star, 0.5 * (c_star + c_star.T)


@dataclass(frozen=True)
class GridPrior:
    """Prior covariance on a grid together with its (jittered) Cholesky factor."""

    cov: np.ndarray
    chol: np.ndarray
    jitter: float


@lru_cache(maxsize=8)
def grid_prior(grid: ThetaGrid, kernel: KernelParams, max_jitter: float = 1e-4) -> GridPrior:
    pts = grid.points
    cov = sq_exp_cov(pts, pts, kernel)
    chol, jitter = chol_psd(cov, max_jitter, "the dense theta grid")
    cov.setflags(write=False)
    chol.setflags(write=False)
    return GridPrior(cov, chol, jitter)
