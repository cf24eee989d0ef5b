"""Numerical toolkit for self-shrinkers of mean curvature flow and cylinder rigidity."""

from .surface import (
    DiscreteHypersurface,
    End,
    GeneralizedCylinderSpec,
    ProfileCurve,
    RotationSignature,
    SurfaceError,
    analytic_shrinker,
    build_from_profile,
    perturb_normal,
    restrict_to_ball,
    shrinker_residual,
)
from .fields import FieldOnSurface
from .functionals import GaussianWindow, F, entropy, f_functional, measure_distance
from .operators import drift_laplacian, shape_quotient, stability_operator
from .flow import FlowTrajectory, run_rescaled_flow
from .rigidity import RigidityCertificate, SpectrumReport, classify_cylinder, tau_spectrum

__version__ = "0.1.0"
