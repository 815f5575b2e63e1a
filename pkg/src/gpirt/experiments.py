"""Held-out evaluation of GPIRT against the 2PL and kernel-smoothed baselines."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .baselines import fit_2pl_mml, fit_ks_irt
from .errors import DegenerateTestError, InvalidArgumentError
from .model import GpirtConfig, ResponseMatrix
from .sampler import Chain, fix_reflection, run_chain
from .scoring import (
    IRFTable,
    MetricsReport,
    estimate_irfs,
    holdout_mask,
    paired_t_test,
    predict_cells,
    score_predictions,
    theta_estimates,
)

log = logging.getLogger(__name__)

MODELS = ("gpirt", "2pl", "ks-irt")
LABELS = {"gpirt": "GPIRT", "2pl": "2PL", "ks-irt": "KS-IRT"}


def auto_anchor(chain: Chain):
    """Respondent whose score is farthest from zero on average; a stable orientation anchor."""
    return chain.respondents[int(np.argmax(np.abs(chain.thetas).mean(axis=0)))]


def fit_gpirt(data: ResponseMatrix, config: GpirtConfig, anchor=None, progress=None):
    """Run a chain, fix its orientation, and return ``(chain, irfs, theta_mean)``."""
    chain = run_chain(data, config, progress)
    if config.grid.is_symmetric:
        chain = fix_reflection(chain, anchor if anchor is not None else auto_anchor(chain))
    return chain, estimate_irfs(chain), theta_estimates(chain)[0]


def fit_model(name: str, train: ResponseMatrix, config: GpirtConfig):
    """Fit one model on ``train``; returns ``(irfs, thetas)`` for plug-in prediction."""
    if name == "gpirt":
        _, irfs, thetas = fit_gpirt(train, config)
    elif name == "2pl":
        fit = fit_2pl_mml(train)
        irfs, thetas = fit.irf_table(config.grid), fit.theta_eap
    elif name == "ks-irt":
        thetas, irfs = fit_ks_irt(train, grid=config.grid)
    else:
        raise InvalidArgumentError(f"unknown model {name!r}; expected one of {MODELS}")
    return irfs, np.clip(thetas, config.grid.lower, config.grid.upper)


def heldout_metrics(irfs: IRFTable, thetas, heldout: np.ndarray, items) -> MetricsReport:
    rows, cols, labels = heldout[:, 0], heldout[:, 1], heldout[:, 2]
    probs = predict_cells(irfs, thetas, rows, cols, items)
    return score_predictions(probs, labels)


@dataclass
class EvaluationResult:
    """Per-repetition held-out metrics for each model."""

    models: tuple
    reports: dict = field(default_factory=dict)  # model -> list[MetricsReport]

    def series(self, model: str, attr: str) -> np.ndarray:
        return np.array([getattr(r, attr) for r in self.reports[model]])

    @property
    def n_repeats(self) -> int:
        return len(self.reports[self.models[0]])

    def comparison(self, model: str, reference: str = "gpirt"):
        """Mean per-response and raw total log-likelihood differences vs ``reference``, with a paired t-test."""
        ll = self.series(model, "mean_loglik_per_response")
        ref = self.series(reference, "mean_loglik_per_response")
        raw = self.series(model, "total_loglik") - self.series(reference, "total_loglik")
        try:
            t, p = paired_t_test(ll, ref)
        except (DegenerateTestError, InvalidArgumentError):
            t, p = float("nan"), float("nan")
        return {
            "diff_per_response": float(np.mean(ll - ref)),
            "diff_total": float(np.mean(raw)),
            "t": t,
            "p": p,
        }

    def summary(self) -> dict:
        out = {"n_repeats": self.n_repeats}
        for name in self.models:
            key = name.replace("-", "_")
            for attr in ("mean_loglik_per_response", "auc", "accuracy"):
                out[f"{key}_{attr}"] = float(np.mean(self.series(name, attr)))
            out[f"{key}_n_heldout"] = int(self.series(name, "n_heldout")[0])
            if name != "gpirt" and "gpirt" in self.models:
                for k, v in self.comparison(name).items():
                    out[f"{key}_vs_gpirt_{k}"] = v
        return out

    def to_table(self) -> str:
        """Aligned text table: L/N, difference vs GPIRT with p-value, AUC, accuracy."""
        head = f"{'Model':<8}{'L/N':>9}{'Diff vs GPIRT (p)':>24}{'Raw diff':>11}{'AUC':>8}{'Accuracy':>10}"
        lines = [f"Held-out fit over {self.n_repeats} repetitions", head]
        for name in self.models:
            ll = np.mean(self.series(name, "mean_loglik_per_response"))
            if name == "gpirt" or "gpirt" not in self.models:
                diff, raw = "---", "---"
            else:
                c = self.comparison(name)
                diff = f"{c['diff_per_response']:+.3f} (p={c['p']:.2g})"
                raw = f"{c['diff_total']:+.1f}"
            auc_ = np.mean(self.series(name, "auc"))
            acc = np.mean(self.series(name, "accuracy"))
            lines.append(f"{LABELS[name]:<8}{ll:>9.3f}{diff:>24}{raw:>11}{auc_:>8.3f}{acc:>10.3f}")
        return "\n".join(lines)


def evaluate_holdout(
    data: ResponseMatrix,
    config: GpirtConfig,
    models=MODELS,
    fraction: float = 0.2,
    repeats: int = 20,
    seed: int | None = None,
    progress=None,
) -> EvaluationResult:
    """Repeatedly hide a random share of cells, fit every model, and score the hidden cells.

    Each repetition draws its mask and its chain seed from its own
    sub-stream, so results do not depend on which models are included.
    """
    models = tuple(models)
    for name in models:
        if name not in MODELS:
            raise InvalidArgumentError(f"unknown model {name!r}; expected one of {MODELS}")
    if repeats < 1:
        raise InvalidArgumentError("repeats must be positive")
    seed = config.seed if seed is None else seed
    result = EvaluationResult(models, {name: [] for name in models})
    for rep in range(repeats):
        rep_ss = np.random.SeedSequence([seed, rep])
        mask_ss, chain_ss = rep_ss.spawn(2)
        train, heldout = holdout_mask(data, fraction, np.random.default_rng(mask_ss))
        rep_config = config.replace(seed=int(chain_ss.generate_state(1, np.uint64)[0] >> 1))
        for name in models:
            irfs, thetas = fit_model(name, train, rep_config)
            report = heldout_metrics(irfs, thetas, heldout, train.items)
            result.reports[name].append(report)
            log.info("repeat %d %s: L/N %.4f", rep, name, report.mean_loglik_per_response)
        if progress is not None:
            progress(rep + 1, repeats)
    return result
