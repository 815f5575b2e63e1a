"""Comparison models: 2PL by marginal maximum likelihood and kernel-smoothed IRT."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit, log_expit, logsumexp

from .errors import InvalidArgumentError, SeparationWarning
from .gp_core import ThetaGrid
from .model import ResponseMatrix
from .scoring import IRFTable

log = logging.getLogger(__name__)

BETA_LIMIT = 50.0
KS_CLIP = 1e-6


@dataclass(frozen=True)
class TwoPLItem:
    beta0: float
    beta1: float

    def __post_init__(self):
        if not (np.isfinite(self.beta0) and np.isfinite(self.beta1)):
            raise InvalidArgumentError("2PL coefficients must be finite")


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
            raise InvalidArgumentError("nodes and weights must be aligned 1-D arrays")
        if np.any(weights <= 0):
            raise InvalidArgumentError("quadrature weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights / weights.sum())

    @classmethod
    def standard_normal(cls, n_nodes: int = 61, lower: float = -5.0, upper: float = 5.0):
        """Equally spaced nodes weighted by the standard normal density."""
        nodes = np.linspace(lower, upper, n_nodes)
        return cls(nodes, stats.norm.pdf(nodes))


@dataclass
class TwoPLFit:
    items: list
    theta_eap: np.ndarray
    item_ids: tuple
    loglik_trace: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([[it.beta0, it.beta1] for it in self.items])

    def irf_table(self, grid: ThetaGrid) -> IRFTable:
        b = self.coefficients
        probs = expit(b[:, :1] + b[:, 1:] * grid.points[None, :])
        probs = np.clip(probs, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        return IRFTable(grid, self.item_ids, probs)


def predict_2pl(item: TwoPLItem, theta):
    out = expit(item.beta0 + item.beta1 * np.asarray(theta, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _node_loglik(coefs, nodes, pos, neg):
    """``(m, K)`` log likelihood of each respondent's responses at each node."""
    f = coefs[:, 0:1] + coefs[:, 1:2] * nodes[None, :]  # (n, K)
    return pos @ log_expit(f) + neg @ log_expit(-f)


def _item_objective(beta, nodes, r, n_tot):
    f = beta[0] + beta[1] * nodes
    return float(r @ log_expit(f) + (n_tot - r) @ log_expit(-f))


def _m_step_item(beta, nodes, r, n_tot, max_newton=25):
    """Maximize one item's expected complete-data log likelihood by damped Newton."""
    x = np.column_stack([np.ones_like(nodes), nodes])
    current = _item_objective(beta, nodes, r, n_tot)
    for _ in range(max_newton):
        p = expit(x @ beta)
        grad = x.T @ (r - n_tot * p)
        hess = (x * (n_tot * p * (1 - p))[:, None]).T @ x + 1e-10 * np.eye(2)
        step = np.linalg.solve(hess, grad)
        scale = 1.0
        while scale > 1e-8:
            cand = beta + scale * step
            value = _item_objective(cand, nodes, r, n_tot)
            if value >= current:
                break
            scale *= 0.5
        else:
            break
        beta, gain, current = cand, value - current, value
        if np.max(np.abs(scale * step)) < 1e-10 or gain < 1e-13:
            break
    return beta, current


def fit_2pl_mml(
    data: ResponseMatrix,
    rule: QuadratureRule | None = None,
    max_em_iters: int = 500,
    tol: float = 1e-6,
) -> TwoPLFit:
    """Fit a logistic 2PL model by EM on the quadrature-approximated marginal likelihood.

    The E-step computes each respondent's posterior weights over the
    quadrature nodes; the M-step runs a weighted logistic regression per
    item on the expected counts. Each M-step only accepts ascent steps, so
    the marginal log likelihood never decreases. Scores are EAP estimates
    under the final item parameters.

    Coefficients exceeding ``|beta| = 50`` (perfect separation) are clamped
    with a ``SeparationWarning``.
    """
    rule = rule or QuadratureRule.standard_normal()
    nodes, log_q = rule.nodes, np.log(rule.weights)
    pos = (data.cells == 1).astype(float)
    neg = (data.cells == -1).astype(float)
    n_items = data.n_items

    n_pos = pos.sum(axis=0)
    n_obs = n_pos + neg.sum(axis=0)
    frac = np.clip(n_pos / np.maximum(n_obs, 1), 0.02, 0.98)
    coefs = np.column_stack([np.log(frac / (1 - frac)), np.ones(n_items)])

    trace = []
    warned = set()
    converged = False
    it = 0
    for it in range(1, max_em_iters + 1):
        joint = _node_loglik(coefs, nodes, pos, neg) + log_q
        marginal = logsumexp(joint, axis=1)
        trace.append(float(marginal.sum()))
        w = np.exp(joint - marginal[:, None])  # (m, K) posterior weights
        r = pos.T @ w  # (n, K) expected positives
        n_tot = (pos + neg).T @ w

        new = coefs.copy()
        for i in range(n_items):
            beta, value = _m_step_item(coefs[i], nodes, r[i], n_tot[i])
            if np.any(np.abs(beta) > BETA_LIMIT):
                if i not in warned:
                    warned.add(i)
                    warnings.warn(
                        f"item {data.items[i]!r} coefficients diverge (separation); clamped",
                        SeparationWarning,
                        stacklevel=2,
                    )
                clamped = np.clip(beta, -BETA_LIMIT, BETA_LIMIT)
                before = _item_objective(coefs[i], nodes, r[i], n_tot[i])
                beta = clamped if _item_objective(clamped, nodes, r[i], n_tot[i]) >= before else coefs[i]
            new[i] = beta
        change = float(np.max(np.abs(new - coefs)))
        coefs = new
        if change < tol:
            converged = True
            break

    joint = _node_loglik(coefs, nodes, pos, neg) + log_q
    marginal = logsumexp(joint, axis=1)
    trace.append(float(marginal.sum()))
    w = np.exp(joint - marginal[:, None])
    theta_eap = w @ nodes

    # the marginal likelihood is symmetric in the sign of the slopes
    if coefs[:, 1].sum() < 0:
        coefs[:, 1] *= -1
        theta_eap = -theta_eap

    items = [TwoPLItem(float(b0), float(b1)) for b0, b1 in coefs]
    log.debug("2PL EM stopped after %d iterations (converged=%s)", it, converged)
    return TwoPLFit(items, theta_eap, data.items, trace, it, converged)


def silverman_bandwidth(m: int) -> float:
    return 1.06 * m ** (-0.2)


def quantile_scores(data: ResponseMatrix) -> np.ndarray:
    """Normal quantiles of the respondents' mid-ranked raw scores.

    Raw score is the fraction of positive responses among observed cells;
    percentile ``(rank - 0.5) / m`` keeps the extremes finite.
    """
    observed = (data.cells != 0).sum(axis=1)
    raw = (data.cells == 1).sum(axis=1) / observed
    ranks = stats.rankdata(raw)
    return stats.norm.ppf((ranks - 0.5) / data.n_respondents)


def fit_ks_irt(data: ResponseMatrix, bandwidth: float | None = None, grid: ThetaGrid | None = None):
    """Kernel-smoothed IRT: Nadaraya-Watson IRFs over quantile score proxies.

    Returns ``(theta_hat, irf_table)``. The default bandwidth is
    ``1.06 * m ** (-1/5)``.
    """
    grid = grid or ThetaGrid()
    if bandwidth is None:
        bandwidth = silverman_bandwidth(data.n_respondents)
    theta_hat = quantile_scores(data)
    return theta_hat, ks_smooth(theta_hat, data, bandwidth, grid)


def ks_smooth(theta_hat, data: ResponseMatrix, bandwidth: float, grid: ThetaGrid) -> IRFTable:
    """Nadaraya-Watson estimate of every item's IRF from fixed score proxies.

    Only respondents observed on an item enter its estimate. Output is
    clipped to ``[1e-6, 1 - 1e-6]``.
    """
    if not bandwidth > 0:
        raise InvalidArgumentError("bandwidth must be positive")
    theta_hat = np.asarray(theta_hat, dtype=float)
    log_k = -0.5 * ((grid.points[:, None] - theta_hat[None, :]) / bandwidth) ** 2  # (G, m)
    # shifting by the row max keeps far-from-data grid points from underflowing
    kern = np.exp(log_k - log_k.max(axis=1, keepdims=True))
    pos = (data.cells == 1).astype(float)
    obs = (data.cells != 0).astype(float)
    num = kern @ pos  # (G, n)
    den = kern @ obs
    tiny = den <= 1e-300
    for g, i in zip(*np.nonzero(tiny)):
        # every respondent on this item is far away; use the nearest one
        rows = np.flatnonzero(obs[:, i])
        best = rows[np.argmax(log_k[g, rows])]
        num[g, i], den[g, i] = pos[best, i], 1.0
    probs = np.clip((num / den).T, KS_CLIP, 1 - KS_CLIP)
    return IRFTable(grid, data.items, probs)


def ks_weights(theta_hat, grid: ThetaGrid, bandwidth: float) -> np.ndarray:
    """Normalized Nadaraya-Watson weights, one row per grid point."""
    u = (grid.points[:, None] - np.asarray(theta_hat)[None, :]) / bandwidth
    log_k = -0.5 * u * u
    return np.exp(log_k - logsumexp(log_k, axis=1, keepdims=True))
