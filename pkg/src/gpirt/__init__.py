"""Gaussian process item response theory.

Nonparametric item response functions with GP priors, fitted jointly
with respondents' latent scores by Gibbs sampling, plus 2PL and
kernel-smoothed baselines and mutual-information adaptive testing.
"""

__version__ = "0.1.0"

from .adaptive import (
    BeliefGrid,
    CatTrace,
    binary_entropy,
    marginal_prob,
    mutual_information,
    replay_experiment,
    run_cat,
    select_item,
    update_belief,
)
from .baselines import QuadratureRule, TwoPLItem, fit_2pl_mml, fit_ks_irt, predict_2pl
from .errors import (
    GpirtError,
    InvalidArgumentError,
    NotPositiveDefiniteError,
    ResponseDataError,
    EmptyRespondentError,
    BadCodeError,
    DuplicateIdError,
    DegenerateDatasetError,
    InvalidStateError,
    DegeneratePosteriorError,
    DegenerateBeliefError,
    OutOfRangeError,
    UndefinedAUCError,
    DegenerateTestError,
    InfeasibleMaskError,
    ChainFormatError,
    ParseError,
    CatOracleError,
    AmbiguousAnchorWarning,
    SeparationWarning,
)
from .gp_core import (
    GridFunction,
    KernelParams,
    MeanParams,
    ThetaGrid,
    chol_psd,
    gp_condition,
    mvn_sample,
    poly_mean,
    sq_exp_cov,
)
from .model import (
    ChainState,
    GpirtConfig,
    Hyperpriors,
    ResponseMatrix,
    drop_degenerate_items,
    recode,
    validate_responses,
)
from .sampler import (
    Chain,
    ess_update,
    extend_to_grid,
    fix_reflection,
    gibbs_sweep,
    inverse_transform_sample,
    log_joint,
    mh_beta_update,
    response_loglik,
    run_chain,
    theta_log_posterior,
)
from .scoring import (
    IRFTable,
    MetricsReport,
    auc,
    estimate_irfs,
    holdout_mask,
    paired_t_test,
    predict_prob,
    respondent_holdout,
    score_predictions,
    theta_estimates,
)
from .synth import GPDraw, Linear, Quadratic, SynthSpec, synth_generate
