"""LGCP-Strauss point processes: simulation, ABC inference, and validation."""

from .core import (
    Marginal,
    ModelParams,
    PointPattern,
    PriorSpec,
    Window,
    close_pair_count,
    neighbour_count,
    oak_prior_preset,
    pairwise_distances,
    prior_p1,
    prior_p2,
    prior_p3,
    sample_prior,
)
from .grf import GridField, field_at, integrate_exp, sample_from_exp_density, simulate_grf
from .samplers import (
    MHState,
    TraceRecord,
    mh_step,
    run_chain,
    simulate_lgcp,
    simulate_lgcp_strauss,
    simulate_poisson,
    simulate_strauss,
)
from .summaries import (
    Curve,
    SummaryVector,
    empty_space_F,
    j_function,
    k_function,
    l_function,
    nearest_neighbour_G,
    quadrat_stats,
    ripley_weight,
    summary_vector,
)
from .regression import ProjectionModel, RegressionData, cv_lambda_1se, lasso_fit, relaxed_lasso_fit
from .inference import (
    ABCPosterior,
    PilotSet,
    abc_rejection,
    chi_distance,
    choose_epsilon,
    fit_abc,
    kde_1d,
    posterior_summary,
    run_pilot,
)
from .envelopes import (
    CurveSet,
    EnvelopeResult,
    combined_envelope,
    erl_measure,
    global_envelope,
    posterior_predictive_curves,
)
from .modelchoice import Forest, ReferenceTable, build_reference_table, choose_model, train_forest

__version__ = "0.1.0"
