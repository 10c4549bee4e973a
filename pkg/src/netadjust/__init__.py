"""Estimation of global average treatment effects on networks under
interference: regression-adjustment estimators, exposure-model IPW
baselines, Monte-Carlo and bootstrap variance estimation, and simulation
campaigns."""

__version__ = "0.1.0"

from .design import TreatmentVector, bernoulli_assign, global_vector, stream_rng
from .errors import (
    ConfigError,
    DataError,
    DegenerateArmError,
    EdgeListParseError,
    EstimationFailureError,
    InvalidParameterError,
    NetAdjustError,
    NumericalError,
    PositivityViolationError,
    SingularDesignError,
)
from .estimators import (
    EstimateReport,
    ExposureProfile,
    crossfit_adjusted_tau,
    crossfit_fit,
    crossfit_tau_from_fit,
    difference_in_means,
    estimator_weights,
    exposure_indicators,
    exposure_profile,
    exposure_propensities,
    exposure_thresholds,
    hajek,
    horvitz_thompson,
    ols_adjusted_tau,
    ols_fit,
)
from .features import (
    CounterfactualMeans,
    FeatureMatrix,
    FeatureRecipe,
    build_features,
    counterfactual_matrices,
    counterfactual_means,
)
from .graph import Graph, load_edge_list, save_edge_list, watts_strogatz
from .inference import (
    AsymptoticInputs,
    BootstrapResult,
    GammaEstimate,
    asymptotic_variance,
    bootstrap_variance,
    confidence_interval,
    mc_gamma,
    neyman_variance,
    plugin_variance,
    residual_variance,
)
from .kernels import BACKEND, neighbor_sum
from .predictors import (
    KNNRegressor,
    LogisticRegressor,
    OLSRegressor,
    RidgeRegressor,
    make_regressor,
)
from .simulate import (
    AvgAggregateNonlinear,
    CampaignConfig,
    DynamicLIM,
    EquilibriumLIM,
    EstimatorSpec,
    ExogenousLIM,
    Scenario,
    SeparateSlopesLinear,
    SimulationReport,
    gen_response,
    run_experiment,
    true_gate_analytic,
    true_gate_mc,
)
