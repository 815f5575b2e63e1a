"""Adaptive testing: mutual-information item selection on a grid belief.

A new respondent's belief over the score is a discrete distribution on
the IRF grid, initialized to the standard normal prior. Each step picks
the unadministered item whose response is most informative about the
score, then multiplies the belief by that item's IRF (or its complement).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import entr

from .errors import (
    CatOracleError,
    DegenerateBeliefError,
    InvalidArgumentError,
)
from .gp_core import ThetaGrid
from .model import ResponseMatrix
from .scoring import IRF_CLIP, IRFTable


@dataclass(frozen=True)
class BeliefGrid:
    grid: ThetaGrid
    log_mass: np.ndarray

    def __post_init__(self):
        log_mass = np.asarray(self.log_mass, dtype=float)
        if log_mass.shape != (len(self.grid),):
            raise InvalidArgumentError("belief must have one entry per grid point")
        top = log_mass.max()
        if not np.isfinite(top):
            raise DegenerateBeliefError("belief has no finite mass")
        object.__setattr__(self, "log_mass", log_mass - top)

    @classmethod
    def prior(cls, grid: ThetaGrid) -> "BeliefGrid":
        """Standard normal prior discretized on the grid."""
        return cls(grid, -0.5 * grid.points**2)

    @classmethod
    def point_mass(cls, grid: ThetaGrid, theta: float) -> "BeliefGrid":
        log_mass = np.full(len(grid), -np.inf)
        log_mass[grid.index_of(theta)] = 0.0
        return cls(grid, log_mass)

    @property
    def mass(self) -> np.ndarray:
        w = np.exp(self.log_mass)
        return w / w.sum()

    def mean(self) -> float:
        return float(self.mass @ self.grid.points)

    def sd(self) -> float:
        w, pts = self.mass, self.grid.points
        mu = w @ pts
        return float(np.sqrt(max(w @ (pts - mu) ** 2, 0.0)))

    def entropy(self) -> float:
        return float(entr(self.mass).sum())


def binary_entropy(p):
    """Entropy in nats of a Bernoulli(p) variable, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise InvalidArgumentError("binary entropy needs probabilities in [0, 1]")
    out = entr(p) + entr(1.0 - p)
    return float(out) if out.ndim == 0 else out


def _clip_row(irf_row, belief: BeliefGrid):
    row = np.asarray(irf_row, dtype=float)
    if row.shape != belief.log_mass.shape:
        raise InvalidArgumentError(
            f"IRF row of length {row.size} does not match the belief grid ({len(belief.grid)})"
        )
    return np.clip(row, IRF_CLIP, 1.0 - IRF_CLIP)


def marginal_prob(irf_row, belief: BeliefGrid) -> float:
    row = np.asarray(irf_row, dtype=float)
    if row.shape != belief.log_mass.shape:
        raise InvalidArgumentError(
            f"IRF row of length {row.size} does not match the belief grid ({len(belief.grid)})"
        )
    return float(belief.mass @ row)


def mutual_information(irf_row, belief: BeliefGrid) -> float:
    """Information (nats) an item's response carries about the score.

    ``h(p*) - E[h(pi(theta))]`` under the belief, with the IRF clipped
    away from 0 and 1 and tiny negative round-off clamped to zero.
    """
    row = _clip_row(irf_row, belief)
    w = belief.mass
    p_star = min(max(float(w @ row), 0.0), 1.0)
    return max(binary_entropy(p_star) - float(w @ binary_entropy(row)), 0.0)


def select_item(available, irfs: IRFTable, belief: BeliefGrid):
    """Item with the largest mutual information; ties go to the lowest table index."""
    available = list(available)
    if not available:
        raise InvalidArgumentError("no available items to select from")
    order = sorted(available, key=irfs.index)
    scores = np.array([mutual_information(irfs.row(i), belief) for i in order])
    return order[int(np.argmax(scores))]


def update_belief(belief: BeliefGrid, irf_row, response: int) -> BeliefGrid:
    if response not in (1, -1):
        raise InvalidArgumentError(f"response must be +1 or -1, got {response!r}")
    row = _clip_row(irf_row, belief)
    factor = np.log(row) if response == 1 else np.log1p(-row)
    return BeliefGrid(belief.grid, belief.log_mass + factor)


@dataclass
class CatTrace:
    administered: list = field(default_factory=list)
    responses: list = field(default_factory=list)
    belief_snapshots: list = field(default_factory=list)
    mi_values: list = field(default_factory=list)
    initial_belief: BeliefGrid | None = None

    @property
    def final_belief(self) -> BeliefGrid | None:
        return self.belief_snapshots[-1] if self.belief_snapshots else self.initial_belief

    def __len__(self) -> int:
        return len(self.administered)


def run_cat(
    irfs: IRFTable,
    responder,
    max_items: int | None = None,
    sd_threshold: float | None = None,
    available=None,
    prior: BeliefGrid | None = None,
) -> CatTrace:
    """Administer items adaptively until a stopping rule fires.

    Stops after ``max_items`` items, once the posterior sd is at most
    ``sd_threshold``, or when the item pool is exhausted. ``responder``
    maps an item id to +1/-1. If it raises, ``CatOracleError`` carries
    the trace built so far.
    """
    if max_items is None and sd_threshold is None:
        max_items = len(irfs.items)
    if max_items is not None and max_items < 0:
        raise InvalidArgumentError("max_items must be non-negative")
    belief = prior if prior is not None else BeliefGrid.prior(irfs.grid)
    pool = [i for i in (irfs.items if available is None else available)]
    trace = CatTrace(initial_belief=belief)

    while pool:
        if max_items is not None and len(trace) >= max_items:
            break
        if sd_threshold is not None and belief.sd() <= sd_threshold:
            break
        item = select_item(pool, irfs, belief)
        mi = mutual_information(irfs.row(item), belief)
        try:
            response = int(responder(item))
        except Exception as exc:
            raise CatOracleError(f"responder failed on item {item!r}: {exc}", trace) from exc
        belief = update_belief(belief, irfs.row(item), response)
        pool.remove(item)
        trace.administered.append(item)
        trace.responses.append(response)
        trace.belief_snapshots.append(belief)
        trace.mi_values.append(mi)
    return trace


def battery_estimate(irfs: IRFTable, responses: dict, items) -> float:
    """Posterior-mean score from the given items' recorded responses."""
    belief = BeliefGrid.prior(irfs.grid)
    for item in items:
        belief = update_belief(belief, irfs.row(item), responses[item])
    return belief.mean()


@dataclass
class ReplayReport:
    rmse: dict
    improvement_vs_random: dict
    n_respondents: int
    battery_size: int
    estimates: dict
    notes: list = field(default_factory=list)

    def to_table(self) -> str:
        cols = [c for c in ("CAT", "Fixed", "Random") if c in self.rmse]
        head = f"{'':>24}" + "".join(f"{c:>10}" for c in cols)
        rmse = f"{'RMSE':>24}" + "".join(f"{self.rmse[c]:>10.3f}" for c in cols)
        imp = f"{'Improvement vs. random':>24}" + "".join(
            f"{'---':>10}" if c == "Random" else f"{100 * self.improvement_vs_random[c]:>9.1f}%"
            for c in cols
        )
        title = f"RMSE for {self.n_respondents} responses to {self.battery_size} items"
        return "\n".join([title, head, rmse, imp])

    def as_dict(self) -> dict:
        out = {"n_respondents": self.n_respondents, "battery_size": self.battery_size}
        for name, value in self.rmse.items():
            out[f"rmse_{name.lower()}"] = value
        for name, value in self.improvement_vs_random.items():
            out[f"improvement_vs_random_{name.lower()}"] = value
        return out


def replay_experiment(
    irfs: IRFTable,
    test: ResponseMatrix,
    k: int,
    fixed_battery=None,
    rng: np.random.Generator | None = None,
) -> ReplayReport:
    """Compare adaptive, fixed and random k-item batteries against the full battery.

    For every test respondent the reference score is the belief mean after
    all of their recorded responses. The adaptive battery replays recorded
    responses as the oracle; the random battery is redrawn per respondent.
    Items a respondent never answered are excluded from their pool.
    """
    rng = rng if rng is not None else np.random.default_rng()
    if k < 0:
        raise InvalidArgumentError("battery size must be non-negative")
    notes = []
    known = [i for i in test.items if i in irfs.items]
    skipped = sorted(set(test.items) - set(known))
    if skipped:
        notes.append(f"items without IRFs ignored: {skipped}")
    col = {i: test.item_index(i) for i in known}
    if fixed_battery is not None:
        missing = [i for i in fixed_battery if i not in col]
        if missing:
            raise InvalidArgumentError(f"fixed battery items not in the data/IRFs: {missing}")

    ref, cat, fixed, rand = [], [], [], []
    for j in range(test.n_respondents):
        responses = {i: int(test.cells[j, col[i]]) for i in known if test.cells[j, col[i]] != 0}
        pool = [i for i in known if i in responses]
        if len(pool) < len(known):
            notes.append(f"respondent {test.respondents[j]!r}: {len(known) - len(pool)} items unanswered")
        ref.append(battery_estimate(irfs, responses, pool))
        trace = run_cat(irfs, responses.__getitem__, max_items=k, available=pool)
        cat.append(trace.final_belief.mean())
        pick = rng.choice(len(pool), size=min(k, len(pool)), replace=False)
        rand.append(battery_estimate(irfs, responses, [pool[p] for p in pick]))
        if fixed_battery is not None:
            fixed.append(battery_estimate(irfs, responses, [i for i in fixed_battery if i in responses]))

    ref = np.asarray(ref)
    estimates = {"Full": ref, "CAT": np.asarray(cat), "Random": np.asarray(rand)}
    if fixed_battery is not None:
        estimates["Fixed"] = np.asarray(fixed)
    rmse = {
        name: float(np.sqrt(np.mean((est - ref) ** 2)))
        for name, est in estimates.items()
        if name != "Full"
    }
    improvement = {}
    for name, value in rmse.items():
        if name == "Random":
            continue
        improvement[name] = (rmse["Random"] - value) / rmse["Random"] if rmse["Random"] > 0 else 0.0
    return ReplayReport(rmse, improvement, test.n_respondents, k, estimates, notes)
