"""Command-line interface: ``gpirt <command> [options]``.

Exit status is 0 on success, 1 for user errors (bad flags, missing or
malformed inputs) and 2 for unexpected internal failures.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .adaptive import replay_experiment
from .baselines import fit_2pl_mml, fit_ks_irt
from .errors import GpirtError, InvalidArgumentError
from .experiments import MODELS, evaluate_holdout, fit_gpirt
from .model import CODINGS, PLUS_MINUS, GpirtConfig
from .scoring import estimate_irfs, predict_cells, score_predictions, theta_estimates
from .synth import PRESETS, SynthSpec, synth_generate

log = logging.getLogger("gpirt")

THREADS_ENV = "GPIRT_THREADS"
EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Reports usage problems with exit status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run options")
    g.add_argument("--seed", type=int, help="random seed")
    g.add_argument("--config", help="flat JSON file of sampler settings")
    g.add_argument("--grid-lower", type=float)
    g.add_argument("--grid-upper", type=float)
    g.add_argument("--grid-step", type=float)
    g.add_argument("--mean-degree", type=int, choices=(0, 1, 2))
    g.add_argument("--iterations", type=int, help="total Gibbs sweeps")
    g.add_argument("--burn-in", type=int, help="sweeps discarded before storing")
    g.add_argument("--thin", type=int)
    g.add_argument(
        "--threads", type=int, help=f"worker threads per sweep (default ${THREADS_ENV} or 1)"
    )
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _coding_flag(p):
    p.add_argument("--coding", choices=CODINGS, default=PLUS_MINUS, help="cell coding of the CSV")
    p.add_argument("--exclude", help="comma-separated respondent ids to drop before use")


def _load_data(args):
    data = gio.load_responses_csv(gio.validate_path(args.data), args.coding)
    if args.exclude:
        ids = [s.strip() for s in args.exclude.split(",") if s.strip()]
        unknown = sorted(set(ids) - set(data.respondents))
        if unknown:
            raise UsageError(f"--exclude names unknown respondents: {unknown}")
        data = data.exclude(ids)
    return data


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="gpirt", description="Gaussian process item response models")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--preset", choices=PRESETS, default="mixed")
    p.add_argument("--respondents", type=int, default=200)
    p.add_argument("--items", type=int, default=40)
    p.add_argument("--quadratic", type=int, help="number of single-peaked items (mixed preset)")
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--out", required=True, help="response CSV to write")
    p.add_argument("--truth-irf", help="write the true IRFs as an IRF CSV")
    p.add_argument("--truth-scores", help="write the true scores as CSV")

    p = sub.add_parser("fit", parents=[common], help="run the Gibbs sampler")
    p.add_argument("data")
    _coding_flag(p)
    p.add_argument("--out", required=True, help="chain archive to write")
    p.add_argument("--anchor", help="respondent id whose score is oriented positive")
    p.add_argument("--no-orient", action="store_true", help="skip the reflection fix")
    p.add_argument("--manifest", help="run manifest path (default: <out>.manifest.json)")

    p = sub.add_parser("irf", parents=[common], help="posterior-mean IRFs from a chain")
    p.add_argument("chain")
    p.add_argument("--out", required=True, help="IRF CSV to write")
    p.add_argument("--scores", help="also write posterior score summaries")

    p = sub.add_parser("predict", parents=[common], help="score a chain's predictions on data")
    p.add_argument("chain")
    p.add_argument("data")
    _coding_flag(p)
    p.add_argument("--out", help="text report path (default stdout)")
    p.add_argument("--json", help="key-value metrics file")

    p = sub.add_parser("evaluate", parents=[common], help="repeated held-out comparison")
    p.add_argument("data")
    _coding_flag(p)
    p.add_argument("--holdout", type=float, default=0.2, help="share of observed cells hidden")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--models", default=",".join(MODELS), help="comma-separated subset of " + ",".join(MODELS))
    p.add_argument("--out", help="text report path (default stdout)")
    p.add_argument("--json", help="key-value metrics file")

    p = sub.add_parser("baseline", parents=[common], help="fit a comparison model")
    p.add_argument("model", choices=("2pl", "ks-irt"))
    p.add_argument("data")
    _coding_flag(p)
    p.add_argument("--out", required=True, help="IRF CSV to write")
    p.add_argument("--scores", help="score CSV to write")
    p.add_argument("--bandwidth", type=float, help="KS-IRT kernel bandwidth")

    p = sub.add_parser("cat", parents=[common], help="adaptive-testing replay experiment")
    p.add_argument("irf", help="IRF CSV (from `irf` or `baseline`)")
    p.add_argument("data", help="responses of the replay respondents")
    _coding_flag(p)
    p.add_argument("--battery", type=int, default=16, help="items per battery")
    p.add_argument("--fixed", help="comma-separated item ids of a fixed battery")
    p.add_argument("--out", help="text report path (default stdout)")
    p.add_argument("--json", help="key-value metrics file")
    return parser


def resolve_config(args) -> GpirtConfig:
    """Defaults, then the config file, then explicit flags."""
    values = GpirtConfig().to_dict()
    env_threads = os.environ.get(THREADS_ENV)
    if env_threads:
        try:
            values["threads"] = int(env_threads)
        except ValueError:
            raise UsageError(f"${THREADS_ENV} must be an integer, got {env_threads!r}") from None
    if args.config:
        gio.validate_path(args.config, "config")
        values.update(gio.load_config(args.config))
    flags = {
        "seed": args.seed,
        "grid_lower": args.grid_lower,
        "grid_upper": args.grid_upper,
        "grid_step": args.grid_step,
        "mean_degree": args.mean_degree,
        "n_iterations": args.iterations,
        "burn_in": args.burn_in,
        "thin": args.thin,
        "threads": args.threads,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.iterations is not None and args.burn_in is None and values["burn_in"] >= values["n_iterations"]:
        values["burn_in"] = values["n_iterations"] // 2
    return GpirtConfig.from_dict(values)


def _emit(text: str, path):
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def cmd_synth(args, config):
    spec = SynthSpec.preset(
        args.preset, args.respondents, args.items, config.seed, args.quadratic, args.missing_rate
    )
    spec = SynthSpec(spec.m, spec.items, spec.seed, spec.missing_rate, config.grid)
    data, truth = synth_generate(spec)
    gio.write_responses_csv(data, args.out)
    if args.truth_irf:
        from .scoring import IRF_CLIP, IRFTable

        probs = np.clip(truth.irf_grid, IRF_CLIP, 1 - IRF_CLIP)
        gio.write_irf_csv(IRFTable(truth.grid, data.items, probs), args.truth_irf)
    if args.truth_scores:
        gio.write_scores_csv(args.truth_scores, data.respondents, truth.thetas, np.zeros(data.n_respondents))
    log.info("wrote %d x %d responses to %s", data.n_respondents, data.n_items, args.out)


def cmd_fit(args, config):
    path = gio.validate_path(args.data)
    data = _load_data(args)

    def progress(sweep, total):
        if sweep % max(1, total // 10) == 0:
            log.info("sweep %d/%d", sweep, total)

    if args.no_orient:
        from .sampler import run_chain

        chain = run_chain(data, config, progress)
    else:
        if args.anchor is not None and args.anchor not in data.respondents:
            raise UsageError(f"anchor {args.anchor!r} is not a respondent id")
        chain, _, _ = fit_gpirt(data, config, args.anchor, progress)
    gio.write_chain(chain, args.out)
    manifest = gio.RunManifest.build("fit", config.to_dict(), config.seed, [path], [args.out])
    manifest.write(args.manifest or f"{args.out}.manifest.json")
    log.info("stored %d states in %s", len(chain), args.out)


def cmd_irf(args, config):
    chain = gio.read_chain(gio.validate_path(args.chain, "chain"))
    gio.write_irf_csv(estimate_irfs(chain), args.out)
    if args.scores:
        mean, sd = theta_estimates(chain)
        gio.write_scores_csv(args.scores, chain.respondents, mean, sd)


def cmd_predict(args, config):
    chain = gio.read_chain(gio.validate_path(args.chain, "chain"))
    data = _load_data(args)
    irfs = estimate_irfs(chain)
    mean, _ = theta_estimates(chain)
    rows, cols, labels = [], [], []
    skipped = 0
    for j, rid in enumerate(data.respondents):
        if rid not in chain.respondents:
            skipped += 1
            continue
        cj = chain.respondents.index(rid)
        for c in np.flatnonzero(data.cells[j]):
            if data.items[c] in irfs.items:
                rows.append(cj)
                cols.append(data.items[c])
                labels.append(int(data.cells[j, c]))
    if not rows:
        raise UsageError("no cells of the data match the chain's respondents and items")
    probs = predict_cells(irfs, mean, rows, range(len(cols)), cols)
    report = score_predictions(probs, np.array(labels))
    text = "\n".join(f"{k:<26}{v}" for k, v in report.as_dict().items())
    if skipped:
        text += f"\n# {skipped} respondents not in the chain were skipped"
    _emit(text, args.out)
    if args.json:
        gio.write_json(report.as_dict(), args.json)


def cmd_evaluate(args, config):
    data = _load_data(args)
    models = tuple(m.strip() for m in args.models.split(",") if m.strip())
    result = evaluate_holdout(data, config, models, args.holdout, args.repeats)
    _emit(result.to_table(), args.out)
    if args.json:
        gio.write_json(result.summary(), args.json)


def cmd_baseline(args, config):
    data = _load_data(args)
    if args.model == "2pl":
        fit = fit_2pl_mml(data)
        irfs, thetas = fit.irf_table(config.grid), fit.theta_eap
    else:
        thetas, irfs = fit_ks_irt(data, args.bandwidth, config.grid)
    gio.write_irf_csv(irfs, args.out)
    if args.scores:
        gio.write_scores_csv(args.scores, data.respondents, thetas, np.full(len(thetas), np.nan))


def cmd_cat(args, config):
    irfs = gio.read_irf_csv(gio.validate_path(args.irf, "IRF"))
    data = _load_data(args)
    fixed = [s.strip() for s in args.fixed.split(",")] if args.fixed else None
    rng = np.random.default_rng(config.seed)
    report = replay_experiment(irfs, data, args.battery, fixed, rng)
    text = report.to_table()
    if report.notes:
        text += "\n" + "\n".join(f"# {n}" for n in report.notes)
    _emit(text, args.out)
    if args.json:
        gio.write_json(report.as_dict(), args.json)


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "irf": cmd_irf,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "cat": cmd_cat,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
        COMMANDS[args.command](args, config)
    except (UsageError, GpirtError, InvalidArgumentError, KeyError, OSError) as exc:
        print(f"gpirt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"gpirt {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
