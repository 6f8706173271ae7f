"""Monthly SIS engine over the population network.

The hot monthly pass has two interchangeable implementations: a compiled
extension (`incarsim.engine._kernel`) and a pure-numpy fallback
(`incarsim.engine.kernel_py`). Both consume the replicate RNG stream in the
same order, so a replicate's trace is bit-identical whichever one runs.
The compiled kernel is used when built; `backend="python"` forces the
fallback and `backend="cython"` requires the extension.
"""

from .arrays import (
    MONTHS_PER_YEAR,
    PopulationArrays,
    ROLE_CODES,
    build_arrays,
    edge_activation_months,
    transmission_matrix,
)
from .core import (
    CalibrationResult,
    EpidemicTrace,
    EVENT_BIRTH,
    EVENT_DEATH,
    EVENT_EDGE,
    EVENT_FIELDS,
    EVENT_RELEASE,
    EVENT_SEED,
    EVENT_SPONTANEOUS,
    INFECTION_CODES,
    Scenario,
    SimState,
    annotate_spells,
    calibrate_spontaneous_rate,
    default_worker_count,
    end_prevalence_mean,
    ensure_arrays,
    replay_counts,
    run_ensemble,
    run_replicate,
    seed_initial_infections,
    step_month,
)
from .kernel_py import DEAD, INCARCERATED, SUSCEPTIBLE, UNBORN


def available_backends() -> tuple:
    """Names of kernels importable in this installation."""
    backends = ["python"]
    try:
        from . import _kernel  # noqa: F401
    except ImportError:
        pass
    else:
        backends.append("cython")
    return tuple(backends)


def default_backend() -> str:
    return "cython" if "cython" in available_backends() else "python"
