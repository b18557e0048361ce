"""Small-signal and time-domain analysis of DC-link voltage control loops on weak grids."""

from .errors import *  # noqa: F401,F403
from .lelmodel import (
    AFTER_TUNING,
    BEFORE_TUNING,
    CALIBRATED_TAU_SYNC,
    FeedbackParams,
    build_closed_loop,
    build_gdvc,
    build_gsync,
    build_loop_gain,
    calibrate_sync,
    classify_stability,
    critical_bracket,
    critical_gain,
    gain_sweep,
    resonant_frequency,
)
from .modeid import ModeEstimate, ThreePhaseRecord, compare_runs, dominant_mode, rms_window
from .ratfun import Polynomial, TransferFunction, bode_sweep, poles, step_response, zeros
from .series import TimeSeries
from .timesim import Scenario, level_scenario, simulate

__version__ = "0.1.0"
