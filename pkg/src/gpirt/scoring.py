"""IRF summaries, held-out prediction and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import expit

from .errors import (
    DegenerateTestError,
    InfeasibleMaskError,
    InvalidArgumentError,
    OutOfRangeError,
    UndefinedAUCError,
)
from .gp_core import ThetaGrid
from .model import MISSING, ResponseMatrix

# IRF values are kept this far from 0 and 1 before taking logs or entropies
IRF_CLIP = 1e-6


@dataclass(frozen=True)
class IRFTable:
    """Item response probabilities on a grid; ``probs`` is ``(n_items, len(grid))``."""

    grid: ThetaGrid
    items: tuple
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (len(self.items), len(self.grid)):
            raise InvalidArgumentError(
                f"IRF table shape {probs.shape} does not match "
                f"{len(self.items)} items x {len(self.grid)} grid points"
            )
        if np.any(probs <= 0) or np.any(probs >= 1):
            raise InvalidArgumentError("IRF probabilities must lie strictly inside (0, 1)")
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "probs", probs)

    def index(self, item) -> int:
        try:
            return self.items.index(item)
        except ValueError:
            raise KeyError(f"item {item!r} not in IRF table") from None

    def row(self, item) -> np.ndarray:
        return self.probs[self.index(item)]

    def subset(self, items) -> "IRFTable":
        return IRFTable(self.grid, tuple(items), self.probs[[self.index(i) for i in items]])


@dataclass(frozen=True)
class MetricsReport:
    mean_loglik_per_response: float
    accuracy: float
    auc: float
    n_heldout: int

    @property
    def total_loglik(self) -> float:
        return self.mean_loglik_per_response * self.n_heldout

    def as_dict(self) -> dict:
        return {
            "mean_loglik_per_response": self.mean_loglik_per_response,
            "total_loglik": self.total_loglik,
            "accuracy": self.accuracy,
            "auc": self.auc,
            "n_heldout": self.n_heldout,
        }


def estimate_irfs(chain) -> IRFTable:
    """Average the logistic transform of every stored dense latent function."""
    if len(chain) == 0:
        raise InvalidArgumentError("cannot estimate IRFs from an empty chain")
    acc = np.zeros(chain.f_star.shape[1:])
    for f in chain.f_star:
        acc += expit(f)
    probs = np.clip(acc / len(chain), np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return IRFTable(chain.grid, chain.items, probs)


def theta_estimates(chain):
    """Posterior mean and sample standard deviation (ddof=1) of every score.

    A single-state chain reports zero spread.
    """
    if len(chain) == 0:
        raise InvalidArgumentError("empty chain")
    mean = chain.thetas.mean(axis=0)
    sd = chain.thetas.std(axis=0, ddof=1) if len(chain) > 1 else np.zeros_like(mean)
    return mean, sd


def predict_prob(irfs: IRFTable, theta, item):
    """Linear interpolation of an item's IRF at ``theta``."""
    theta_arr = np.asarray(theta, dtype=float)
    if not irfs.grid.contains(theta_arr):
        raise OutOfRangeError(
            f"theta {theta} outside the grid [{irfs.grid.lower}, {irfs.grid.upper}]"
        )
    theta_arr = np.clip(theta_arr, irfs.grid.lower, irfs.grid.upper)
    out = np.interp(theta_arr, irfs.grid.points, irfs.row(item))
    return float(out) if out.ndim == 0 else out


def predict_cells(irfs: IRFTable, thetas, rows, cols, items=None) -> np.ndarray:
    """Predicted positive-response probabilities for (respondent, item) index pairs.

    ``items`` maps column indices to item ids; by default the table's own order.
    """
    items = irfs.items if items is None else items
    thetas = np.asarray(thetas, dtype=float)
    out = np.empty(len(rows))
    for k, (r, c) in enumerate(zip(rows, cols)):
        out[k] = predict_prob(irfs, thetas[r], items[c])
    return out


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(random positive outranks random negative), ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise InvalidArgumentError("scores and labels must be aligned")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC needs both positive and negative labels")
    ranks = stats.rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def score_predictions(probs, labels) -> MetricsReport:
    """Held-out log likelihood per response, accuracy (cut at 0.5, ties -> +1) and AUC."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.shape != labels.shape:
        raise InvalidArgumentError("probabilities and labels must be aligned")
    if probs.size == 0:
        raise InvalidArgumentError("no predictions to score")
    p = np.clip(probs, 1e-15, 1.0 - 1e-15)
    ll = np.where(labels == 1, np.log(p), np.log1p(-p))
    predicted = np.where(probs >= 0.5, 1, -1)
    try:
        area = auc(probs, labels)
    except UndefinedAUCError:
        area = float("nan")
    return MetricsReport(
        float(ll.mean()), float(np.mean(predicted == labels)), area, int(probs.size)
    )


def holdout_mask(data: ResponseMatrix, fraction: float, rng: np.random.Generator, max_retries=100):
    """Hide a uniform random ``fraction`` of the observed cells.

    Returns ``(train, heldout)`` where ``heldout`` is an ``(k, 3)`` integer
    array of ``(row, col, y)``. A draw that would leave a respondent or an
    item without observations is rejected and redrawn.
    """
    if not 0 < fraction < 1:
        raise InvalidArgumentError("fraction must lie in (0, 1)")
    obs_rows, obs_cols = np.nonzero(data.cells)
    n_hold = int(round(fraction * obs_rows.size))
    for _ in range(max_retries):
        pick = np.sort(rng.choice(obs_rows.size, size=n_hold, replace=False))
        rows, cols = obs_rows[pick], obs_cols[pick]
        cells = data.cells.copy()
        cells[rows, cols] = MISSING
        if (cells != MISSING).any(axis=1).all() and (cells != MISSING).any(axis=0).all():
            heldout = np.column_stack([rows, cols, data.cells[rows, cols]]).astype(np.int64)
            return data.with_cells(cells), heldout
    raise InfeasibleMaskError(
        f"could not hold out {n_hold} cells without emptying a respondent or item"
    )


def respondent_holdout(data: ResponseMatrix, fraction: float, rng: np.random.Generator):
    """Split respondents (rows) into ``(train, test)`` matrices."""
    if not 0 < fraction < 1:
        raise InvalidArgumentError("fraction must lie in (0, 1)")
    m = data.n_respondents
    n_test = int(round(fraction * m))
    perm = rng.permutation(m)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return data.take_respondents(train_rows), data.take_respondents(test_rows)


def paired_t_test(a, b):
    """Two-sided paired t-test; returns ``(t, p)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise InvalidArgumentError("need two aligned samples of length >= 2")
    d = a - b
    sd = d.std(ddof=1)
    if sd <= 1e-12 * max(1.0, float(np.abs(d).max())):
        raise DegenerateTestError("paired differences have zero variance")
    t = d.mean() / (sd / np.sqrt(d.size))
    p = 2.0 * stats.t.sf(abs(t), df=d.size - 1)
    return float(t), float(p)


def irf_log_likelihood(irfs: IRFTable, cells: np.ndarray, items=None) -> np.ndarray:
    """Log likelihood of each row of ``cells`` at every grid point under fixed IRFs.

    ``items`` names the columns of ``cells`` (default: the table's items).
    """
    if items is not None:
        probs = irfs.probs[[irfs.index(i) for i in items]]
    else:
        probs = irfs.probs
    probs = np.clip(probs, IRF_CLIP, 1 - IRF_CLIP)
    pos = (cells == 1).astype(float)
    neg = (cells == -1).astype(float)
    return pos @ np.log(probs) + neg @ np.log1p(-probs)


def score_respondents(irfs: IRFTable, data: ResponseMatrix):
    """Grid posterior mean and sd of each respondent's score given fixed IRFs.

    Uses the standard normal score prior on the IRF grid.
    """
    pts = irfs.grid.points
    log_post = irf_log_likelihood(irfs, data.cells, data.items) - 0.5 * pts**2
    w = np.exp(log_post - log_post.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    mean = w @ pts
    sd = np.sqrt(np.maximum(w @ pts**2 - mean**2, 0.0))
    return mean, sd
