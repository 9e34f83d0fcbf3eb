"""Dark-count QBER, sift rates and secure distance for copy-group detection in QKD."""

from .montecarlo import McConfig, McEstimate, mc_estimate
from .oracle import group_outcome_enum, protocol_decision_dp, qber_oracle
from .protocol import (
    INGAAS,
    UPCONVERSION,
    ChannelSpec,
    CopyConfig,
    DetectorSpec,
    GroupDistribution,
    Kind,
    Scenario,
    Variant,
    transmittance,
    validate_config,
)
from .rates import Path, RateReport, qber_approx, qber_paper_sums, whole_detective_efficiency, whole_measurement_error
from .sweep import SweepSpec, ThresholdUnreachableError, distance_sweep, max_distance

__version__ = "0.1.0"
