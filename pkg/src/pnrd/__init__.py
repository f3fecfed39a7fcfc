"""Photon-number-resolving detectors with loss and saturation.

Modules: :mod:`povm` (detector model), :mod:`states` (photon-number
sources), :mod:`analytics` (closed-form joint statistics),
:mod:`montecarlo` (trial simulator), :mod:`calibration` (absolute
efficiency calibration) and :mod:`cli`.
"""

from .analytics import (
    count_statistics,
    nrf,
    poisson_mean_count,
    poisson_second_moment,
    q_measure,
    vdp_tmc,
    vdp_twb,
)
from .povm import CountDistribution, DetectorModel, ValidationError, apply_detector
from .special import DomainError
from .states import SourceKind, make_source, poisson_distribution

__all__ = [
    "CountDistribution",
    "DetectorModel",
    "DomainError",
    "SourceKind",
    "ValidationError",
    "apply_detector",
    "count_statistics",
    "make_source",
    "nrf",
    "poisson_distribution",
    "poisson_mean_count",
    "poisson_second_moment",
    "q_measure",
    "vdp_tmc",
    "vdp_twb",
]

__version__ = "0.1.0"
