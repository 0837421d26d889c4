"""Hybrid on-device/server language-model inference simulator.

Simulates single-draft speculative token generation split between a small
on-device model and a large server model over a fading wireless uplink,
with an uncertainty-gated skip rule, and reports throughput and fidelity
metrics for the LLM, SLM, HLM, Rand-HLM, and U-HLM inference methods.
"""

__version__ = "0.1.0"

from .calibration import (
    CalibrationModel,
    UncertaintyHistogram,
    estimate_delta,
    expected_risk,
    fit_linear,
    risk_upper_bound,
    thresholds,
)
from .channel import ChannelParams, payload_bits, sample_snr, uplink_latency
from .core import (
    RandomStream,
    Vocabulary,
    sample_categorical,
    softmax,
    temperature_softmax,
)
from .engine import (
    EngineConfig,
    LatencyModel,
    Method,
    RoundRecord,
    RunSummary,
    compute_tsr,
    run_generation,
    throughput_identity_check,
)
from .uncertainty import (
    PerturbationConfig,
    UncertaintyEstimate,
    measure_uncertainty,
    sample_temperatures,
    skip_decision,
)
from .verifier import (
    Decision,
    VerificationOutcome,
    effective_distribution,
    rejection_probability,
    residual_distribution,
    verify,
)
