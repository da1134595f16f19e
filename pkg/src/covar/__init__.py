"""Coderivative calculus and well-posedness certificates for stochastic multifunctions."""
from .geometry import (
    CoderivativeSet,
    HomogeneousMapValue,
    LiftedPolyhedron,
    PolyhedralCone,
    PolyhedralSet,
    coderivative_normal_cone_map,
    face_pairs,
    normal_cone,
    tangent_cone,
)
from .multifunction import (
    AffineMap,
    BoxValued,
    ComposedNormalCone,
    Indicator,
    MaxAffine,
    NormalConeMap,
    Polynomial,
    PolyScalar,
    Quadratic,
    SetValue,
    SmoothMap,
    SmoothPlusMap,
    coderivative,
    second_order_subdifferential,
    select_vars,
)
from .stochastic import Atom, RandomIntegrand, ScenarioModel, expected_coderivative, expected_map, leibniz_estimate
from .wellposedness import Certificate, certify, lipschitz_certify, metric_regularity_certify
from .systems import (
    ConstraintSystemSpec,
    MpecSpec,
    SemilinearSpec,
    SolutionMap,
    StationaryMapSpec,
    VariationalSystemSpec,
    constraint_certify,
    mpec_check,
    stationary_certify,
    variational_certify,
)
from .oracle import GridSpec, empirical_coderivative, empirical_lip, empirical_normal_cone, empirical_reg

__version__ = "0.1.0"
