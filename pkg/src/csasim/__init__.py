"""Cooperative sequential adsorption: simulation and limit-theorem checks."""

from .errors import ConfigError, CSAError, DomainViolation, Refusal, SamplerStall
from .geometry import BoxDomain, Field, GridIndex, RadiusField, ball_volume_coeff, neighbor_count
from .intensity import IntensityFamily, validate_family
from .measure import QuadratureGrid, TestFunction
from .sampler import (CSAModel, ProcessState, make_rng, next_point_ar, next_point_exact,
                      simulate, simulate_birth_process, stream_seed)

__version__ = "0.1.0"
