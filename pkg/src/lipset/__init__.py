"""Set-valued models of unknown Lipschitz dynamics, learned from trajectories.

The pieces compose in data order: samples go into a consistency envelope,
queries against the envelope produce slices (intersections of norm balls),
slices get summarized by coordinate intervals, diameter bounds, or outer
ellipsoids, and the whole envelope can feed certified invariant-set
synthesis for closed-loop data.
"""

from .envelope import (
    DataInconsistencyError,
    LipschitzEnvelope,
    SamplePair,
    build_qc_matrix,
    inflated_radius,
    is_redundant,
    qc_eval,
    refine,
    refine_many,
)
from .slices import (
    SliceSet,
    coordinate_interval,
    diameter_bound,
    sample_points,
    slice,
    slice_member,
)
from .ellipsoid import Ellipsoid, containment_audit, outer_ellipsoid
from .invariant import (
    BisectionConfig,
    EllipsoidalInvariantSet,
    SynthesisError,
    conditioning_transform,
    estimate_equilibrium,
    synthesize,
    verify_by_envelope,
    verify_by_simulation,
)
from .sysid import (
    PendulumParams,
    TrajectoryDataset,
    assumed_model,
    detect_periodicity,
    pendulum_map,
    pendulum_step,
    residual_dataset,
    simulate,
)
from .sdp import SolverFailure

__version__ = "0.1.0"

__all__ = [
    "DataInconsistencyError",
    "LipschitzEnvelope",
    "SamplePair",
    "build_qc_matrix",
    "inflated_radius",
    "is_redundant",
    "qc_eval",
    "refine",
    "refine_many",
    "SliceSet",
    "coordinate_interval",
    "diameter_bound",
    "sample_points",
    "slice",
    "slice_member",
    "Ellipsoid",
    "containment_audit",
    "outer_ellipsoid",
    "BisectionConfig",
    "EllipsoidalInvariantSet",
    "SynthesisError",
    "conditioning_transform",
    "estimate_equilibrium",
    "synthesize",
    "verify_by_envelope",
    "verify_by_simulation",
    "PendulumParams",
    "TrajectoryDataset",
    "assumed_model",
    "detect_periodicity",
    "pendulum_map",
    "pendulum_step",
    "residual_dataset",
    "simulate",
    "SolverFailure",
    "__version__",
]
