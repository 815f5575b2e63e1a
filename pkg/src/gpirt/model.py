"""Response data, coding conventions, priors and sampler configuration.

Responses are stored as an ``int8`` matrix with ``+1`` (positive),
``-1`` (negative) and ``0`` (missing). Every likelihood in the package
iterates only over observed cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BadCodeError,
    DegenerateDatasetError,
    DuplicateIdError,
    EmptyRespondentError,
    InvalidArgumentError,
)
from .gp_core import MAX_MEAN_DEGREE, KernelParams, ThetaGrid

MISSING = 0

ZERO_ONE = "zero-one"
PLUS_MINUS = "pm"
CODINGS = (ZERO_ONE, PLUS_MINUS)


@dataclass(frozen=True)
class ResponseMatrix:
    respondents: tuple
    items: tuple
    cells: np.ndarray

    @classmethod
    def from_array(cls, cells, respondents=None, items=None) -> "ResponseMatrix":
        """Build and validate a matrix from ``{-1, 0, +1}`` cells (NaN also means missing)."""
        arr = np.asarray(cells, dtype=float)
        if arr.ndim != 2:
            raise InvalidArgumentError("response cells must be a 2-D array")
        m, n = arr.shape
        if respondents is None:
            respondents = [f"r{j}" for j in range(m)]
        if items is None:
            items = [f"i{i}" for i in range(n)]
        return validate_responses(cls(tuple(respondents), tuple(items), arr))

    @property
    def shape(self):
        return self.cells.shape

    @property
    def n_respondents(self) -> int:
        return len(self.respondents)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def observed(self) -> np.ndarray:
        return self.cells != MISSING

    @property
    def n_observed(self) -> int:
        return int(np.count_nonzero(self.cells))

    def item_index(self, item) -> int:
        try:
            return self.items.index(item)
        except ValueError:
            raise KeyError(f"unknown item {item!r}") from None

    def respondent_index(self, respondent) -> int:
        try:
            return self.respondents.index(respondent)
        except ValueError:
            raise KeyError(f"unknown respondent {respondent!r}") from None

    def take_respondents(self, rows) -> "ResponseMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        return ResponseMatrix(
            tuple(self.respondents[r] for r in rows), self.items, _frozen(self.cells[rows])
        )

    def take_items(self, cols) -> "ResponseMatrix":
        cols = np.asarray(cols, dtype=np.intp)
        return ResponseMatrix(
            self.respondents, tuple(self.items[c] for c in cols), _frozen(self.cells[:, cols])
        )

    def with_cells(self, cells) -> "ResponseMatrix":
        return ResponseMatrix(self.respondents, self.items, _frozen(np.asarray(cells, np.int8)))

    def exclude(self, respondent_ids) -> "ResponseMatrix":
        drop = set(respondent_ids)
        keep = [j for j, r in enumerate(self.respondents) if r not in drop]
        return self.take_respondents(keep)

    def __eq__(self, other):
        if not isinstance(other, ResponseMatrix):
            return NotImplemented
        return (
            self.respondents == other.respondents
            and self.items == other.items
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=np.int8)
    arr.setflags(write=False)
    return arr


def validate_responses(raw: ResponseMatrix) -> ResponseMatrix:
    """Check ids and codes, reject empty respondents, and canonicalize the cells.

    Accepted cell values are ``-1``, ``+1`` and missing (``0`` or NaN).
    Idempotent: validating an already-valid matrix returns an equal one.
    """
    respondents = tuple(str(r) for r in raw.respondents)
    items = tuple(str(i) for i in raw.items)
    cells = np.asarray(raw.cells, dtype=float)
    if cells.ndim != 2 or cells.shape != (len(respondents), len(items)):
        raise InvalidArgumentError(
            f"cells of shape {cells.shape} do not match {len(respondents)} respondents "
            f"x {len(items)} items"
        )
    for kind, ids in (("respondent", respondents), ("item", items)):
        seen = set()
        for x in ids:
            if x in seen:
                raise DuplicateIdError(f"duplicate {kind} id {x!r}")
            seen.add(x)

    missing = np.isnan(cells)
    filled = np.where(missing, 0.0, cells)
    bad = ~np.isin(filled, (-1.0, 0.0, 1.0))
    if bad.any():
        r, c = map(int, np.argwhere(bad)[0])
        raise BadCodeError(r, c, cells[r, c])

    canon = filled.astype(np.int8)
    empty = ~(canon != MISSING).any(axis=1)
    if empty.any():
        raise EmptyRespondentError(respondents[int(np.argmax(empty))])
    return ResponseMatrix(respondents, items, _frozen(canon))


def drop_degenerate_items(data: ResponseMatrix, min_minority_frac: float = 0.01):
    """Remove items whose minority class is rarer than ``min_minority_frac``.

    Returns ``(filtered, dropped_ids)``. Items with no observed responses
    are always dropped.
    """
    if not 0 <= min_minority_frac < 0.5:
        raise InvalidArgumentError("min_minority_frac must lie in [0, 0.5)")
    pos = (data.cells == 1).sum(axis=0)
    neg = (data.cells == -1).sum(axis=0)
    total = pos + neg
    with np.errstate(invalid="ignore", divide="ignore"):
        minority = np.where(total > 0, np.minimum(pos, neg) / np.maximum(total, 1), 0.0)
    keep = (total > 0) & (minority >= min_minority_frac)
    if min_minority_frac > 0:
        keep &= minority > 0
    if not keep.any():
        raise DegenerateDatasetError("every item was dropped as degenerate")
    dropped = [data.items[i] for i in np.flatnonzero(~keep)]
    filtered = validate_responses(data.take_items(np.flatnonzero(keep)))
    return filtered, dropped


def recode(cells, coding: str) -> np.ndarray:
    """Map responses to ``{-1, +1}`` with ``0`` marking missing.

    ``cells`` is any float-convertible array where NaN (or ``None``) marks
    a missing response. Under ``"zero-one"`` coding 0 -> -1 and 1 -> +1;
    ``"pm"`` coding is checked and passed through.
    """
    if coding not in CODINGS:
        raise InvalidArgumentError(f"unknown coding {coding!r}; expected one of {CODINGS}")
    arr = np.array(cells, dtype=float)
    missing = np.isnan(arr)
    valid = (0.0, 1.0) if coding == ZERO_ONE else (-1.0, 1.0)
    bad = ~missing & ~np.isin(arr, valid)
    if bad.any():
        pos = tuple(int(p) for p in np.argwhere(bad)[0])
        row, col = pos if arr.ndim == 2 else (0, pos[-1])
        raise BadCodeError(row, col, arr[pos])
    out = np.zeros(arr.shape, dtype=np.int8)
    if coding == ZERO_ONE:
        out[~missing] = np.where(arr[~missing] == 1.0, 1, -1)
    else:
        out[~missing] = arr[~missing].astype(np.int8)
    return out


@dataclass(frozen=True)
class Hyperpriors:
    """Fixed prior hyperparameters.

    The latent-score prior is standard normal and not configurable.
    Mean-function coefficients get independent normal priors.
    """

    beta_mean: tuple = (0.0, 0.0)
    beta_var: tuple = (4.0, 4.0)
    theta_mean: float = field(default=0.0, init=False)
    theta_var: float = field(default=1.0, init=False)

    def __post_init__(self):
        bm = tuple(float(x) for x in self.beta_mean)
        bv = tuple(float(x) for x in self.beta_var)
        if len(bm) != len(bv):
            raise InvalidArgumentError("beta_mean and beta_var must have equal length")
        if any(v <= 0 for v in bv):
            raise InvalidArgumentError("beta prior variances must be positive")
        object.__setattr__(self, "beta_mean", bm)
        object.__setattr__(self, "beta_var", bv)

    @classmethod
    def default(cls, degree: int, mean: float = 0.0, var: float = 4.0) -> "Hyperpriors":
        return cls((mean,) * (degree + 1), (var,) * (degree + 1))

    @property
    def degree(self) -> int:
        return len(self.beta_mean) - 1


@dataclass
class ChainState:
    """One Gibbs state.

    ``betas`` has shape ``(n_items, degree + 1)``; ``f_star`` has shape
    ``(n_items, len(grid))``; ``f_obs[i]`` holds item ``i``'s latent
    function at the scores of the respondents who answered it, in
    respondent order.
    """

    thetas: np.ndarray
    betas: np.ndarray
    f_obs: list
    f_star: np.ndarray

    def copy(self) -> "ChainState":
        return ChainState(
            self.thetas.copy(), self.betas.copy(), [f.copy() for f in self.f_obs], self.f_star.copy()
        )


@dataclass(frozen=True)
class GpirtConfig:
    grid: ThetaGrid = ThetaGrid()
    mean_degree: int = 1
    kernel: KernelParams = KernelParams()
    n_iterations: int = 5000
    burn_in: int = 2500
    thin: int = 1
    seed: int = 0
    mh_proposal_sd: float = 0.1
    link: str = "logistic"
    beta_prior_mean: float = 0.0
    beta_prior_var: float = 4.0
    max_jitter: float = 1e-4
    threads: int = 1

    def __post_init__(self):
        if not 0 <= self.mean_degree <= MAX_MEAN_DEGREE:
            raise InvalidArgumentError(f"mean_degree must be in 0..{MAX_MEAN_DEGREE}")
        if self.n_iterations < 1:
            raise InvalidArgumentError("n_iterations must be positive")
        if not 0 <= self.burn_in < self.n_iterations:
            raise InvalidArgumentError("burn_in must satisfy 0 <= burn_in < n_iterations")
        if self.thin < 1:
            raise InvalidArgumentError("thin must be >= 1")
        if self.mh_proposal_sd < 0:
            raise InvalidArgumentError("mh_proposal_sd must be non-negative")
        if self.link != "logistic":
            raise InvalidArgumentError(f"unsupported link {self.link!r}; only 'logistic'")
        if self.threads < 1:
            raise InvalidArgumentError("threads must be >= 1")

    @property
    def hyperpriors(self) -> Hyperpriors:
        return Hyperpriors.default(self.mean_degree, self.beta_prior_mean, self.beta_prior_var)

    @property
    def n_stored(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thin

    def replace(self, **changes) -> "GpirtConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "grid_lower": self.grid.lower,
            "grid_upper": self.grid.upper,
            "grid_step": self.grid.step,
            "mean_degree": self.mean_degree,
            "scale_factor": self.kernel.scale_factor,
            "length_scale": self.kernel.length_scale,
            "n_iterations": self.n_iterations,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "mh_proposal_sd": self.mh_proposal_sd,
            "link": self.link,
            "beta_prior_mean": self.beta_prior_mean,
            "beta_prior_var": self.beta_prior_var,
            "max_jitter": self.max_jitter,
            "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GpirtConfig":
        d = dict(d)
        unknown = set(d) - set(cls().to_dict())
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        grid = ThetaGrid(
            float(d.pop("grid_lower", -5.0)),
            float(d.pop("grid_upper", 5.0)),
            float(d.pop("grid_step", 0.01)),
        )
        kernel = KernelParams(float(d.pop("scale_factor", 1.0)), float(d.pop("length_scale", 1.0)))
        ints = {"mean_degree", "n_iterations", "burn_in", "thin", "seed", "threads"}
        kw = {k: (int(v) if k in ints else v if k == "link" else float(v)) for k, v in d.items()}
        return cls(grid=grid, kernel=kernel, **kw)
