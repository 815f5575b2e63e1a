"""Gibbs sampler for GP item response models.

One sweep updates, in order:

1. each item's latent function values at its respondents' scores
   (elliptical slice sampling against the GP prior),
2. each item's latent function on the dense grid, conditioned on (1),
3. every respondent's score, drawn exactly from its grid posterior by
   inverse transform sampling,
4. each item's mean-function coefficients by random-walk Metropolis.

Scores live on the grid, so after step 3 the observed-point function
values are read off the dense draw instead of being re-conditioned.

Randomness is split into sub-streams keyed by (sweep, stage, item), so a
chain is bitwise reproducible from its seed no matter how many worker
threads run the per-item stages.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import log_expit

from .errors import (
    AmbiguousAnchorWarning,
    DegeneratePosteriorError,
    InvalidArgumentError,
    InvalidStateError,
)
from .gp_core import (
    GridFunction,
    KernelParams,
    ThetaGrid,
    chol_psd,
    gp_condition,
    grid_prior,
    mvn_sample,
    poly_mean,
    sq_exp_cov,
)
from .model import ChainState, GpirtConfig, Hyperpriors, ResponseMatrix

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

__all__ = [
    "Chain",
    "GridFunction",
    "response_loglik",
    "ess_update",
    "extend_to_grid",
    "theta_log_posterior",
    "inverse_transform_sample",
    "mh_beta_update",
    "gibbs_sweep",
    "run_chain",
    "fix_reflection",
    "log_joint",
]


def response_loglik(f, y):
    """``log sigma(y * f)`` for the logistic link, stable for large ``|f|``."""
    return log_expit(np.asarray(y, dtype=float) * np.asarray(f, dtype=float))


def log_std_normal(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * (x * x + LOG_2PI)


def gp_log_density(f, mean, chol) -> float:
    """Multivariate normal log density given the Cholesky factor of the covariance."""
    resid = np.asarray(f, dtype=float) - mean
    if resid.size == 0:
        return 0.0
    r = solve_triangular(chol, resid, lower=True, check_finite=False)
    return float(-0.5 * r @ r - np.log(np.diag(chol)).sum() - 0.5 * resid.size * LOG_2PI)


def beta_log_prior(betas, prior: Hyperpriors) -> float:
    betas = np.asarray(betas, dtype=float)
    mu = np.asarray(prior.beta_mean)
    var = np.asarray(prior.beta_var)
    z = (betas - mu) ** 2 / var
    return float(-0.5 * (z + np.log(var) + LOG_2PI).sum())


# -- elliptical slice sampling ------------------------------------------------


def ess_update(f_current, prior_mean, prior_chol, loglik, rng, cur_loglik=None):
    """One elliptical slice sampling transition.

    Leaves ``N(f; prior_mean, L L^T) * exp(loglik(f))`` invariant, where
    ``L = prior_chol``.

    Parameters
    ----------
    f_current : ndarray
        Current state.
    prior_mean : ndarray
        Mean of the Gaussian prior.
    prior_chol : ndarray
        Lower Cholesky factor of the prior covariance.
    loglik : callable
        Log-likelihood of a state.
    rng : numpy.random.Generator
    cur_loglik : float, optional
        ``loglik(f_current)`` if already known.

    Returns
    -------
    f_new : ndarray
    loglik_new : float
    """
    f_current = np.asarray(f_current, dtype=float)
    prior_mean = np.asarray(prior_mean, dtype=float)
    if cur_loglik is None:
        cur_loglik = loglik(f_current)
    if not np.isfinite(cur_loglik):
        raise InvalidStateError(f"log-likelihood at the current state is {cur_loglik}")

    nu = np.asarray(prior_chol) @ rng.standard_normal(f_current.shape[0])
    with np.errstate(divide="ignore"):
        threshold = cur_loglik + np.log(rng.random())
    offset = f_current - prior_mean

    phi = rng.uniform(0.0, 2.0 * math.pi)
    lo, hi = phi - 2.0 * math.pi, phi
    while True:
        proposal = prior_mean + offset * math.cos(phi) + nu * math.sin(phi)
        ll = loglik(proposal)
        if ll > threshold:
            return proposal, float(ll)
        if phi > 0:
            hi = phi
        else:
            lo = phi
        if hi - lo < 1e-12:
            # bracket collapsed onto the current point, which is always on the slice
            return f_current.copy(), float(cur_loglik)
        phi = rng.uniform(lo, hi)


# -- dense-grid extension -----------------------------------------------------


def _on_grid_indices(grid: ThetaGrid, theta_obs):
    idx = grid.index_of(theta_obs)
    if theta_obs.size and np.max(np.abs(grid.points[idx] - theta_obs)) > 1e-9:
        return None
    return idx


def extend_to_grid(
    theta_obs,
    f_obs,
    betas,
    config: GpirtConfig,
    rng: np.random.Generator,
    obs_chol=None,
    obs_jitter: float | None = None,
    method: str = "auto",
) -> GridFunction:
    """Draw the latent function on the whole grid given its values at ``theta_obs``.

    The draw is from ``N(m*, C*)``, the GP conditional on the grid.
    ``method="direct"`` forms and factorizes ``C*`` explicitly; this costs
    a grid-sized Cholesky per call. ``method="pathwise"`` (the default
    when every observed score sits on the grid) draws a prior sample on
    the grid from a cached factor and corrects it with the observed
    residual, which has the same distribution up to jitter terms.
    """
    grid = config.grid
    theta_obs = np.atleast_1d(np.asarray(theta_obs, dtype=float))
    f_obs = np.atleast_1d(np.asarray(f_obs, dtype=float))
    if theta_obs.shape != f_obs.shape:
        raise InvalidArgumentError("theta_obs and f_obs must have equal length")
    idx = _on_grid_indices(grid, theta_obs)
    if method == "auto":
        method = "pathwise" if idx is not None else "direct"
    if method == "pathwise" and idx is None:
        raise InvalidArgumentError("pathwise extension requires scores on the grid")

    if method == "direct":
        m_star, c_star = gp_condition(
            theta_obs, f_obs, grid.points, betas, config.kernel, config.max_jitter
        )
        chol, _ = chol_psd(c_star, config.max_jitter, "the conditional grid covariance")
        return GridFunction(grid, mvn_sample(m_star, chol, rng))
    if method != "pathwise":
        raise InvalidArgumentError(f"unknown extension method {method!r}")

    prior = grid_prior(grid, config.kernel, config.max_jitter)
    draw = prior.chol @ rng.standard_normal(len(grid))
    mu_grid = poly_mean(grid.points, betas)
    if theta_obs.size == 0:
        return GridFunction(grid, mu_grid + draw)
    if obs_chol is None:
        obs_chol, obs_jitter = chol_psd(prior.cov[np.ix_(idx, idx)], config.max_jitter)
    noise = math.sqrt(obs_jitter) * rng.standard_normal(theta_obs.size) if obs_jitter else 0.0
    resid = f_obs - poly_mean(theta_obs, betas) - (draw[idx] + noise)
    alpha = cho_solve((obs_chol, True), resid, check_finite=False)
    uniq, inverse = np.unique(idx, return_inverse=True)
    weights = np.bincount(inverse, weights=alpha, minlength=uniq.size)
    return GridFunction(grid, mu_grid + draw + prior.cov[:, uniq] @ weights)


# -- latent score update ------------------------------------------------------


def theta_log_posterior(responses_j, f_stars, grid: ThetaGrid | None = None) -> np.ndarray:
    """Unnormalized log posterior of one respondent's score at every grid point.

    ``responses_j`` is a sequence of ``(item_index, y)`` pairs and
    ``f_stars`` either a sequence of ``GridFunction`` or an
    ``(n_items, len(grid))`` array (then ``grid`` is required).
    """
    if grid is None:
        grid = f_stars[0].grid
    values = np.asarray([g.values for g in f_stars]) if not isinstance(f_stars, np.ndarray) else f_stars
    out = log_std_normal(grid.points)
    for i, y in responses_j:
        out = out + response_loglik(values[i], y)
    return out


def theta_log_posteriors(cells: np.ndarray, f_star: np.ndarray, grid: ThetaGrid) -> np.ndarray:
    """Vectorized ``theta_log_posterior`` for every row of ``cells`` at once."""
    pos = (cells == 1).astype(float)
    neg = (cells == -1).astype(float)
    return log_std_normal(grid.points) + pos @ log_expit(f_star) + neg @ log_expit(-f_star)


def _inverse_cdf_rows(log_w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Grid index of the first point whose cumulative mass reaches ``u``, per row.

    ``u`` must lie in (0, 1].
    """
    log_w = np.atleast_2d(log_w)
    top = log_w.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise DegeneratePosteriorError("posterior weights are all -inf (or non-finite)")
    w = np.exp(log_w - top)
    cdf = np.cumsum(w, axis=1)
    cdf /= cdf[:, -1:]
    idx = (cdf < np.asarray(u)[:, None]).sum(axis=1)
    # u == 1 can overshoot by rounding; fall back to the last point carrying mass
    last = w.shape[1] - 1 - np.argmax(w[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last)


def inverse_transform_sample(grid, unnormalized_log_weights, rng: np.random.Generator) -> float:
    """Draw one grid point with probability proportional to ``exp(log_weights)``."""
    points = grid.points if isinstance(grid, ThetaGrid) else np.asarray(grid, dtype=float)
    log_w = np.asarray(unnormalized_log_weights, dtype=float)
    if log_w.shape != points.shape:
        raise InvalidArgumentError("log weights must align with the grid")
    u = 1.0 - rng.random()
    return float(points[_inverse_cdf_rows(log_w[None, :], np.array([u]))[0]])


# -- mean-function coefficients -----------------------------------------------


def mh_beta_update(
    betas,
    theta_obs,
    f_obs,
    prior: Hyperpriors,
    proposal_sd: float,
    rng: np.random.Generator,
    kernel: KernelParams = KernelParams(),
    chol=None,
    max_jitter: float = 1e-4,
):
    """Random-walk Metropolis step for one item's mean coefficients.

    The target is the coefficient prior times the GP density of ``f_obs``
    under mean ``mu(theta_obs; betas)``. Returns ``(betas_new, accepted)``.
    """
    betas = np.asarray(betas, dtype=float)
    theta_obs = np.asarray(theta_obs, dtype=float)
    if chol is None:
        chol, _ = chol_psd(sq_exp_cov(theta_obs, theta_obs, kernel), max_jitter)
    proposal = betas + proposal_sd * rng.standard_normal(betas.shape)

    def target(b):
        return beta_log_prior(b, prior) + gp_log_density(f_obs, poly_mean(theta_obs, b), chol)

    delta = target(proposal) - target(betas) if proposal_sd > 0 else 0.0
    with np.errstate(divide="ignore"):
        accepted = math.log(rng.random()) < delta
    return (proposal if accepted else betas.copy()), bool(accepted)


# -- sweeps -------------------------------------------------------------------


@dataclass
class _Workspace:
    """Per-dataset lookups reused by every sweep."""

    data: ResponseMatrix
    rows: list
    ys: list

    @classmethod
    def build(cls, data: ResponseMatrix) -> "_Workspace":
        cells = data.cells
        rows = [np.flatnonzero(cells[:, i]) for i in range(data.n_items)]
        ys = [cells[r, i].astype(float) for i, r in enumerate(rows)]
        return cls(data, rows, ys)


def _substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *key])))


@dataclass
class _Sites:
    """An item's distinct grid points among its respondents' scores.

    Respondents sharing a grid point share one latent value, so the GP
    only ever sees distinct inputs. ``inverse`` maps respondents to sites
    and ``pos``/``neg`` count the responses at each site. Sites are kept
    in ``_site_order``.
    """

    index: np.ndarray
    inverse: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    chol: np.ndarray
    jitter: float

    def loglik(self, f) -> float:
        return float(self.pos @ log_expit(f) + self.neg @ log_expit(-f))

    def first(self) -> np.ndarray:
        """Position of each site's first respondent."""
        out = np.empty(self.index.size, dtype=np.intp)
        out[self.inverse[::-1]] = np.arange(self.inverse.size)[::-1]
        return out


def _site_order(theta, f=None) -> np.ndarray:
    """Order sites by ``(|theta|, f, theta)``.

    The reflection map sends the site at ``theta`` to ``-theta`` with the
    same latent value, so this order is preserved position by position
    and every kernel entry is bitwise unchanged. Evaluating the GP density
    in this order makes its reflection invariance exact in floating point;
    in plain grid order the near-singular kernel matrices amplify rounding
    differences to ~1e-5.
    """
    keys = (theta,) if f is None else (theta, f)
    return np.lexsort(keys + (np.abs(theta),))


def _item_sites(theta_idx, ws: _Workspace, config: GpirtConfig, items, f_star=None):
    prior = grid_prior(config.grid, config.kernel, config.max_jitter)
    pts = config.grid.points
    out = []
    for i in items:
        uniq, inverse = np.unique(theta_idx[ws.rows[i]], return_inverse=True)
        order = _site_order(pts[uniq], None if f_star is None else f_star[i, uniq])
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        index, inverse = uniq[order], rank[inverse]
        y = ws.ys[i]
        pos = np.bincount(inverse, weights=(y > 0), minlength=index.size)
        neg = np.bincount(inverse, weights=(y < 0), minlength=index.size)
        chol, jitter = chol_psd(
            prior.cov[np.ix_(index, index)], config.max_jitter, f"item {ws.data.items[i]!r}"
        )
        out.append(_Sites(index, inverse, pos, neg, chol, jitter))
    return out


def _map(executor, fn, n):
    if executor is None:
        return [fn(i) for i in range(n)]
    return list(executor.map(fn, range(n)))


def _extend_batch(sites, updates, betas, config: GpirtConfig) -> np.ndarray:
    """Pathwise grid extension for every item at once.

    ``updates[i]`` is ``(f_sites, z_grid, z_noise)``. Equivalent to calling
    ``extend_to_grid(..., method="pathwise")`` per item with the same
    draws, but the grid-sized products become two matrix-matrix products.
    """
    grid = config.grid
    prior = grid_prior(grid, config.kernel, config.max_jitter)
    z = np.stack([u[1] for u in updates], axis=1)
    draws = prior.chol @ z  # (G, n)
    weights = np.zeros_like(draws)
    mu_grid = np.empty((len(sites), len(grid)))
    for i, (site, (f_new, _, e)) in enumerate(zip(sites, updates)):
        mu_grid[i] = poly_mean(grid.points, betas[i])
        noise = math.sqrt(site.jitter) * e if site.jitter else 0.0
        resid = f_new - mu_grid[i, site.index] - (draws[site.index, i] + noise)
        weights[site.index, i] = cho_solve((site.chol, True), resid, check_finite=False)
    return mu_grid + (draws + prior.cov @ weights).T


def _sweep(state: ChainState, ws: _Workspace, config: GpirtConfig, sites, sweep_seed: int, executor):
    grid = config.grid
    n = ws.data.n_items

    def update_function(i):
        rng = _substream(sweep_seed, 0, i)
        site = sites[i]
        th = grid.points[site.index]
        f_cur = state.f_obs[i][site.first()]
        f_new, _ = ess_update(f_cur, poly_mean(th, state.betas[i]), site.chol, site.loglik, rng)
        # same draw order as extend_to_grid's pathwise branch
        z = rng.standard_normal(len(grid))
        e = rng.standard_normal(site.index.size) if site.jitter else None
        return f_new, z, e

    updates = _map(executor, update_function, n)
    f_star = _extend_batch(sites, updates, state.betas, config)

    rng_theta = _substream(sweep_seed, 1)
    log_post = theta_log_posteriors(ws.data.cells, f_star, grid)
    u = 1.0 - rng_theta.random(ws.data.n_respondents)
    new_idx = _inverse_cdf_rows(log_post, u)
    new_thetas = grid.points[new_idx].copy()
    f_obs = [f_star[i, new_idx[ws.rows[i]]] for i in range(n)]
    new_sites = _item_sites(new_idx, ws, config, range(n), f_star)
    prior = config.hyperpriors

    def update_beta(i):
        rng = _substream(sweep_seed, 2, i)
        site = new_sites[i]
        return mh_beta_update(
            state.betas[i],
            grid.points[site.index],
            f_star[i, site.index],
            prior,
            config.mh_proposal_sd,
            rng,
            config.kernel,
            site.chol,
        )

    results = _map(executor, update_beta, n)
    betas = np.stack([b for b, _ in results])
    accepted = np.array([a for _, a in results])
    return ChainState(new_thetas, betas, f_obs, f_star), new_sites, accepted


def gibbs_sweep(state: ChainState, data: ResponseMatrix, config: GpirtConfig, rng) -> ChainState:
    """Run one full sweep and return the new state (the input is not modified)."""
    ws = _Workspace.build(data)
    sites = _item_sites(config.grid.index_of(state.thetas), ws, config, range(data.n_items), state.f_star)
    sweep_seed = int(rng.integers(2**63))
    new_state, _, _ = _sweep(state, ws, config, sites, sweep_seed, None)
    return new_state


def _state_log_joint(state: ChainState, ws: _Workspace, config: GpirtConfig, sites) -> float:
    prior = config.hyperpriors
    total = float(log_std_normal(state.thetas).sum())
    for i in range(ws.data.n_items):
        site = sites[i]
        first = site.first()
        th = state.thetas[ws.rows[i]][first]
        total += beta_log_prior(state.betas[i], prior)
        total += gp_log_density(state.f_obs[i][first], poly_mean(th, state.betas[i]), site.chol)
        total += float(log_expit(ws.ys[i] * state.f_obs[i]).sum())
    return total


def log_joint(state: ChainState, data: ResponseMatrix, config: GpirtConfig) -> float:
    """Log joint density of scores, coefficients, latent values and responses.

    The GP term is the prior density of each item's latent values at the
    distinct scores of its respondents. Recomputes every kernel matrix
    from scratch, so it serves as an independent check on the value
    tracked during sampling.
    """
    prior = config.hyperpriors
    total = float(log_std_normal(state.thetas).sum())
    for i in range(data.n_items):
        rows = np.flatnonzero(data.cells[:, i])
        th_all = state.thetas[rows]
        f_all = state.f_obs[i]
        th, first = np.unique(th_all, return_index=True)
        order = _site_order(th, f_all[first])
        th, first = th[order], first[order]
        chol, _ = chol_psd(
            sq_exp_cov(th, th, config.kernel), config.max_jitter, f"item {data.items[i]!r}"
        )
        total += beta_log_prior(state.betas[i], prior)
        total += gp_log_density(f_all[first], poly_mean(th, state.betas[i]), chol)
        total += float(response_loglik(f_all, data.cells[rows, i]).sum())
    return total


# -- chains -------------------------------------------------------------------


@dataclass
class Chain:
    """Post burn-in, thinned samples plus diagnostics.

    Arrays are stacked over stored states: ``thetas`` is ``(S, m)``,
    ``betas`` ``(S, n, degree + 1)`` and ``f_star`` ``(S, n, len(grid))``.
    """

    config: GpirtConfig
    data: ResponseMatrix
    thetas: np.ndarray
    betas: np.ndarray
    f_star: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.thetas.shape[0]

    @property
    def grid(self) -> ThetaGrid:
        return self.config.grid

    @property
    def items(self):
        return self.data.items

    @property
    def respondents(self):
        return self.data.respondents

    def state(self, k: int) -> ChainState:
        idx = self.grid.index_of(self.thetas[k])
        cells = self.data.cells
        f_obs = [
            self.f_star[k, i, idx[np.flatnonzero(cells[:, i])]] for i in range(self.data.n_items)
        ]
        return ChainState(self.thetas[k], self.betas[k], f_obs, self.f_star[k])

    @property
    def states(self):
        return [self.state(k) for k in range(len(self))]


def initial_state(ws: _Workspace, config: GpirtConfig, rng: np.random.Generator) -> ChainState:
    grid = config.grid
    data = ws.data
    thetas = grid.snap(rng.standard_normal(data.n_respondents))
    prior = config.hyperpriors
    betas = np.asarray(prior.beta_mean) + np.sqrt(prior.beta_var) * rng.standard_normal(
        (data.n_items, config.mean_degree + 1)
    )
    theta_idx = grid.index_of(thetas)
    sites = _item_sites(theta_idx, ws, config, range(data.n_items))
    f_star = []
    for i, site in enumerate(sites):
        th = grid.points[site.index]
        f = mvn_sample(poly_mean(th, betas[i]), site.chol, rng)
        f_star.append(extend_to_grid(th, f, betas[i], config, rng, site.chol, site.jitter, "pathwise").values)
    # read back from the grid so the state is internally consistent from the start
    f_star = np.stack(f_star)
    f_obs = [f_star[i, theta_idx[ws.rows[i]]] for i in range(data.n_items)]
    return ChainState(thetas, betas, f_obs, f_star)


def run_chain(data: ResponseMatrix, config: GpirtConfig, progress=None) -> Chain:
    """Initialize from the priors and run ``config.n_iterations`` sweeps.

    ``progress``, if given, is called as ``progress(sweep, n_iterations)``
    after each sweep.
    """
    ws = _Workspace.build(data)
    root = np.random.SeedSequence(config.seed)
    init_rng, sweep_rng = (np.random.Generator(np.random.PCG64(s)) for s in root.spawn(2))
    state = initial_state(ws, config, init_rng)
    sites = _item_sites(config.grid.index_of(state.thetas), ws, config, range(data.n_items), state.f_star)

    n_store = config.n_stored
    m, n, g = data.n_respondents, data.n_items, len(config.grid)
    thetas = np.empty((n_store, m))
    betas = np.empty((n_store, n, config.mean_degree + 1))
    f_star = np.empty((n_store, n, g))
    trace = np.empty(config.n_iterations)
    accepts = np.zeros(n)
    k = 0

    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for sweep in range(1, config.n_iterations + 1):
            sweep_seed = int(sweep_rng.integers(2**63))
            state, sites, accepted = _sweep(state, ws, config, sites, sweep_seed, executor)
            accepts += accepted
            trace[sweep - 1] = _state_log_joint(state, ws, config, sites)
            if not np.isfinite(trace[sweep - 1]):
                raise InvalidStateError(f"log joint is not finite after sweep {sweep}")
            if sweep > config.burn_in and (sweep - config.burn_in) % config.thin == 0:
                thetas[k], betas[k], f_star[k] = state.thetas, state.betas, state.f_star
                k += 1
            if progress is not None:
                progress(sweep, config.n_iterations)
    finally:
        if executor is not None:
            executor.shutdown()

    stored = config.burn_in + config.thin * np.arange(1, n_store + 1) - 1
    diagnostics = {
        "beta_acceptance": accepts / config.n_iterations,
        "log_joint": trace,
        "log_joint_stored": trace[stored].copy(),
    }
    log.info(
        "chain finished: %d sweeps, %d stored, mean beta acceptance %.3f",
        config.n_iterations,
        n_store,
        float(diagnostics["beta_acceptance"].mean()),
    )
    return Chain(config, data, thetas, betas, f_star, diagnostics)


def reflect_state(state: ChainState) -> ChainState:
    """Map ``(theta, f(.), beta_d) -> (-theta, f(-.), (-1)^d beta_d)``.

    Odd-order mean coefficients flip sign so that the mean function is
    reflected together with the latent function.
    """
    signs = (-1.0) ** np.arange(state.betas.shape[-1])
    return ChainState(
        -state.thetas,
        state.betas * signs,
        [f.copy() for f in state.f_obs],
        state.f_star[:, ::-1].copy(),
    )


def fix_reflection(chain: Chain, anchor: str, sign: int = 1) -> Chain:
    """Orient every stored state so that ``anchor``'s score has the given sign.

    States whose anchor score already has the desired sign (or is zero)
    are left untouched. Requires a grid symmetric about zero.
    """
    if sign not in (1, -1):
        raise InvalidArgumentError("sign must be +1 or -1")
    if not chain.grid.is_symmetric:
        raise InvalidArgumentError("reflection requires a grid symmetric about zero")
    j = chain.data.respondent_index(anchor)
    anchor_thetas = chain.thetas[:, j]
    if np.mean(np.abs(anchor_thetas) < 1e-6) > 0.5:
        warnings.warn(
            f"anchor {anchor!r} sits at zero in most states; orientation is ambiguous",
            AmbiguousAnchorWarning,
            stacklevel=2,
        )
    flip = anchor_thetas * sign < -1e-12
    signs = (-1.0) ** np.arange(chain.betas.shape[-1])

    thetas = chain.thetas.copy()
    betas = chain.betas.copy()
    f_star = chain.f_star.copy()
    thetas[flip] = -thetas[flip]
    betas[flip] = betas[flip] * signs
    f_star[flip] = f_star[flip][:, :, ::-1]
    diagnostics = dict(chain.diagnostics)
    diagnostics["reflected"] = flip
    return replace(chain, thetas=thetas, betas=betas, f_star=f_star, diagnostics=diagnostics)
