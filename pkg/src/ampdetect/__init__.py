"""Joint device-activity detection and embedded-bit decoding via AMP.

Simulates grant-free random access in massive MIMO: Bernoulli pilot matrices,
sparse user activity, Rayleigh channels with distance path loss, the AMP
recursion with activity-gated MMSE denoisers (including the pair-structured
variant that decodes one embedded information bit per user), closed-form
detection thresholds, and a reproducible Monte Carlo sweep harness.
"""

from .amp import (
    AmpDivergenceError,
    AmpState,
    amp_init,
    amp_iterate,
    effective_observation,
    run_amp,
    run_amp_flagged,
    state_evolution,
)
from .config import ConfigError, ScenarioConfig, load_scenario, save_scenario
from .denoisers import (
    MampDenoiser,
    MmseDenoiser,
    SlotParams,
    eib_coefficient,
    gate_t,
    likelihood_lambda,
    log_likelihood,
    mamp_denoise,
    mmse_denoise,
    sigmoid,
)
from .detect import (
    CalibrationError,
    DetectionReport,
    TrialMetrics,
    activity_threshold,
    detect_eib,
    detect_plain,
    equal_error_calibrate,
    score_report,
)
from .experiments import (
    ALGORITHMS,
    ResultRow,
    SweepSpec,
    binomial_ci,
    load_results,
    load_sweep,
    persist,
    run_point,
    run_sweep,
    run_trial,
)
from .scenario import (
    SignalMatrices,
    UserState,
    draw_beta_population,
    encode,
    gen_pilots,
    gen_users,
    synthesize_rx,
)

__version__ = "0.1.0"
