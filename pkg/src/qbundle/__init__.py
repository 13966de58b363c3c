"""Quantum evolution in the Hilbert-space and fibre-bundle descriptions.

Propagators, evolution transports along an observer's path, picture
transformations, and integral-of-motion certificates, all as dense
complex matrices of dimension at most 64.
"""

from .bundle import (
    BundleAtlas,
    EvolutionTransport,
    FrameField,
    MorphismField,
    ObserverPath,
    StateSection,
    connection_coefficients,
    evolution_transport,
    fibre_mean_value,
    frame_field,
    lift_observable,
    lift_state,
    morphism_derivation,
    normal_frame,
    transport_morphism,
    transport_state,
)
from .errors import (QBundleError, DimMismatch, DimensionTooLarge, ZeroState, NonFinite, NonHermitianInput, StepFailure, BoundaryTime, DomainError, SingularTrivialization, SingularSeed, SingularGauge, InsufficientStates, ParseError, ValidationError)  # noqa: F401
from .integrals import IntegralVerdict, certify, gauge_transform
from .linalg import Tolerance, matrix_exponential
from .pictures import UnitaryFamily, interaction_picture, to_heisenberg_observable, v_hamiltonians
from .propagation import HamiltonianFamily, IntegratorConfig, Propagator, propagate

__version__ = "0.1.0"
