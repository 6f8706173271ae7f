"""Agent-based SIS model of incarceration spreading over family networks.

The package builds a synthetic kinship-and-friendship population, derives
monthly transmission probabilities from a survey of whole-sentence risks,
runs a seedable discrete-time SIS contagion where a sentence is the
infectious period, and summarizes replicate ensembles (prevalence bands,
significance series, recidivism tables) alongside a mean-field ODE
reduction. The ``incarsim`` command line exposes the full pipeline with
reproducible run directories.
"""

__version__ = "0.1.0"

from .analytics import (
    PrevalenceSummary,
    RecidivismReport,
    export_plot_csv,
    log_pvalue_series,
    next_month_infection_hazard,
    overlay_external_series,
    recidivism_report,
    summarize_ensemble,
)
from .config import (
    RunConfig,
    default_run_config,
    load_run_config,
    parse_run_config,
)
from .engine import (
    EpidemicTrace,
    Scenario,
    annotate_spells,
    available_backends,
    calibrate_spontaneous_rate,
    default_backend,
    run_ensemble,
    run_replicate,
)
from .errors import (
    CalibrationError,
    ConfigurationError,
    ConsistencyError,
    EngineError,
    FitError,
    IncarsimError,
)
from .ode import (
    OdeParams,
    calibrate_mean_rate,
    critical_sentence,
    ode_report,
    steady_state_prevalence,
)
from .popgen import (
    Population,
    generate_population,
    load_population,
    save_population,
)
from .sentencing import (
    SentenceDistribution,
    fit_negative_binomial,
    fit_report,
)
from .tables import DemographicTables, load_demographic_tables
from .transmission import (
    SurveyTable,
    TransmissionTable,
    default_survey_table,
    derive_transmission_table,
    load_survey_table,
)

__all__ = [
    "__version__",
    "PrevalenceSummary",
    "RecidivismReport",
    "export_plot_csv",
    "log_pvalue_series",
    "next_month_infection_hazard",
    "overlay_external_series",
    "recidivism_report",
    "summarize_ensemble",
    "RunConfig",
    "default_run_config",
    "load_run_config",
    "parse_run_config",
    "EpidemicTrace",
    "Scenario",
    "annotate_spells",
    "available_backends",
    "calibrate_spontaneous_rate",
    "default_backend",
    "run_ensemble",
    "run_replicate",
    "CalibrationError",
    "ConfigurationError",
    "ConsistencyError",
    "EngineError",
    "FitError",
    "IncarsimError",
    "OdeParams",
    "calibrate_mean_rate",
    "critical_sentence",
    "ode_report",
    "steady_state_prevalence",
    "Population",
    "generate_population",
    "load_population",
    "save_population",
    "SentenceDistribution",
    "fit_negative_binomial",
    "fit_report",
    "DemographicTables",
    "load_demographic_tables",
    "SurveyTable",
    "TransmissionTable",
    "default_survey_table",
    "derive_transmission_table",
    "load_survey_table",
]
