"""predictorlab: predictor-based sampled-data output feedback for nonlinear
systems with input and measurement delays."""

from .errors import (ContractionViolated, InvalidArgument, NotHurwitz, OutOfDomain,
                     PredictorLabError, SimulationDiverged, UndefinedFit, UnknownPlant)
from .kernels import BACKEND, HAVE_COMPILED
from .plant import LtiPlant, StrictFeedbackPlant, catalog_get, catalog_names
from .signals import ExogenousSignal, SamplingSchedule, StateHistory, ZohSignal
from .observer import ObserverGains
from .predictor import PredictorConfig, estimate_K, lti_predict, phi, predict
from .controller import (DesignCertificates, FeedbackGains, check_design_conditions,
                         check_nonlinear_lyapunov, synthesize_certificates)
from .simulator import SimConfig, SimTrace, decay_fit, error_norm, run_closed_loop, run_monitors
from .analysis import SweepSpec, design_report, predictor_convergence_study, run_sweep
from .config import ScenarioFile, load_scenario, parse_scenario, shipped_scenario

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "HAVE_COMPILED",
    "ContractionViolated", "InvalidArgument", "NotHurwitz", "OutOfDomain", "PredictorLabError",
    "SimulationDiverged", "UndefinedFit", "UnknownPlant",
    "LtiPlant", "StrictFeedbackPlant", "catalog_get", "catalog_names",
    "ExogenousSignal", "SamplingSchedule", "StateHistory", "ZohSignal",
    "ObserverGains",
    "PredictorConfig", "estimate_K", "lti_predict", "phi", "predict",
    "DesignCertificates", "FeedbackGains", "check_design_conditions", "check_nonlinear_lyapunov",
    "synthesize_certificates",
    "SimConfig", "SimTrace", "decay_fit", "error_norm", "run_closed_loop", "run_monitors",
    "SweepSpec", "design_report", "predictor_convergence_study", "run_sweep",
    "ScenarioFile", "load_scenario", "parse_scenario", "shipped_scenario",
]
