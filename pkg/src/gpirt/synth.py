"""Synthetic response data with known scores and item response functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError
from .gp_core import KernelParams, ThetaGrid, grid_prior, poly_mean
from .model import ResponseMatrix


@dataclass(frozen=True)
class Linear:
    beta0: float = 0.0
    beta1: float = 1.0

    @property
    def coefficients(self):
        return (self.beta0, self.beta1)


@dataclass(frozen=True)
class Quadratic:
    beta0: float = 0.0
    beta1: float = 0.0
    beta2: float = -1.0

    @property
    def coefficients(self):
        return (self.beta0, self.beta1, self.beta2)


@dataclass(frozen=True)
class GPDraw:
    """A latent function drawn from the zero-mean GP prior on the grid."""

    kernel: KernelParams = KernelParams()


FAMILIES = (Linear, Quadratic, GPDraw)
PRESETS = ("linear", "mixed", "gp")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic dataset.

    ``items`` holds one family instance per item. Scores are standard
    normal unless ``thetas`` pins them. ``missing_rate`` hides that share
    of cells at random while keeping every respondent observed at least once.
    """

    m: int
    items: tuple
    seed: int = 0
    missing_rate: float = 0.0
    grid: ThetaGrid = ThetaGrid()
    thetas: tuple | None = None
    theta_source: str = "standard_normal"

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if self.m < 1 or not self.items:
            raise InvalidArgumentError("need at least one respondent and one item")
        if not 0 <= self.missing_rate < 1:
            raise InvalidArgumentError("missing_rate must lie in [0, 1)")
        if self.theta_source != "standard_normal":
            raise InvalidArgumentError(f"unsupported theta source {self.theta_source!r}")
        for it in self.items:
            if not isinstance(it, FAMILIES):
                raise InvalidArgumentError(f"unknown item family {it!r}")
            if not isinstance(it, GPDraw) and not np.all(np.isfinite(it.coefficients)):
                raise InvalidArgumentError("item coefficients must be finite")
        if self.thetas is not None:
            object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
            if len(self.thetas) != self.m:
                raise InvalidArgumentError("pinned thetas must have one entry per respondent")

    @property
    def n(self) -> int:
        return len(self.items)

    @classmethod
    def preset(
        cls,
        name: str,
        m: int = 200,
        n: int = 40,
        seed: int = 0,
        n_quadratic: int | None = None,
        missing_rate: float = 0.0,
    ) -> "SynthSpec":
        """Named item banks.

        ``linear``: monotone 2PL items. ``mixed``: linear items plus
        ``n_quadratic`` single-peaked items (default a quarter of the bank).
        ``gp``: every item a GP prior draw. Item parameters come from ``seed``.
        """
        if name not in PRESETS:
            raise InvalidArgumentError(f"unknown preset {name!r}; expected one of {PRESETS}")
        if n < 1:
            raise InvalidArgumentError("need at least one item")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
        if name == "gp":
            items = [GPDraw() for _ in range(n)]
        else:
            if name == "linear":
                n_quadratic = 0
            elif n_quadratic is None:
                n_quadratic = n // 4
            if not 0 <= n_quadratic <= n:
                raise InvalidArgumentError("n_quadratic must lie in [0, n]")
            items = [
                Linear(float(rng.normal(0.0, 1.0)), float(rng.uniform(0.75, 2.0)))
                for _ in range(n - n_quadratic)
            ]
            items += [
                # single-peaked: positive near a random ideal point, negative far from it
                _peaked(rng.uniform(-1.0, 1.0), rng.uniform(1.0, 2.0), rng.uniform(0.5, 1.5))
                for _ in range(n_quadratic)
            ]
            # spread the quadratic items through the bank
            order = rng.permutation(n)
            items = [items[k] for k in order]
        return cls(m=m, items=tuple(items), seed=seed, missing_rate=missing_rate)


def _peaked(center, curvature, height) -> Quadratic:
    """``height - curvature * (theta - center)**2`` in polynomial form."""
    c, a, h = float(center), float(curvature), float(height)
    return Quadratic(h - a * c * c, 2 * a * c, -a)


@dataclass
class SynthTruth:
    thetas: np.ndarray
    grid: ThetaGrid
    f_grid: np.ndarray  # (n, len(grid))
    families: tuple = field(default_factory=tuple)

    @property
    def irf_grid(self) -> np.ndarray:
        return expit(self.f_grid)


def _item_function(item, grid: ThetaGrid, rng):
    if isinstance(item, GPDraw):
        prior = grid_prior(grid, item.kernel)
        return prior.chol @ rng.standard_normal(len(grid))
    return poly_mean(grid.points, item.coefficients)


def _values_at(item, f_grid_row, grid: ThetaGrid, thetas):
    if isinstance(item, GPDraw):
        return np.interp(np.clip(thetas, grid.lower, grid.upper), grid.points, f_grid_row)
    return poly_mean(thetas, item.coefficients)


def synth_generate(spec: SynthSpec):
    """Draw a response matrix and its generating truth.

    Returns ``(data, truth)``. Each cell is ``+1`` with probability
    ``sigmoid(f_i(theta_j))``. Linear and quadratic items are evaluated
    exactly; GP items are drawn on the grid and interpolated.
    """
    theta_ss, item_ss, resp_ss, miss_ss = np.random.SeedSequence(spec.seed).spawn(4)
    if spec.thetas is not None:
        thetas = np.array(spec.thetas)
    else:
        thetas = np.random.default_rng(theta_ss).standard_normal(spec.m)

    item_rng = np.random.default_rng(item_ss)
    f_grid = np.stack([_item_function(it, spec.grid, item_rng) for it in spec.items])
    f_obs = np.stack(
        [_values_at(it, f_grid[i], spec.grid, thetas) for i, it in enumerate(spec.items)], axis=1
    )  # (m, n)

    resp_rng = np.random.default_rng(resp_ss)
    cells = np.where(resp_rng.random(f_obs.shape) < expit(f_obs), 1, -1).astype(np.int8)

    if spec.missing_rate > 0:
        miss_rng = np.random.default_rng(miss_ss)
        hide = miss_rng.random(cells.shape) < spec.missing_rate
        # keep one randomly chosen cell per fully hidden row
        for j in np.flatnonzero(hide.all(axis=1)):
            hide[j, miss_rng.integers(spec.n)] = False
        cells[hide] = 0

    width = len(str(max(spec.m, spec.n) - 1))
    data = ResponseMatrix.from_array(
        cells,
        respondents=[f"r{j:0{width}d}" for j in range(spec.m)],
        items=[f"i{i:0{width}d}" for i in range(spec.n)],
    )
    return data, SynthTruth(thetas, spec.grid, f_grid, spec.items)
