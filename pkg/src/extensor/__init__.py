"""Differentiation of extended tensor fields on composite tensor bundles."""

__version__ = "0.1.0"

from .atlas import Chart, Transition, TransitionData, check_theta_duality, transition_data
from .bundle import BundleSpec, BundleTangent, FiberPoint, Section, native_field, transform_fiber_point
from .chainrule import RestrictedField, chain_rule_residual, restrict, standard_covariant
from .connection import (
    ExtendedConnection,
    covariant_differential,
    spatial_covariant,
    transform_connection,
    vertical_derivative,
    vertical_differential,
)
from .curvature import (
    CurvaturePack,
    curvature_pack,
    dynamic_curvature,
    omega_tensor,
    static_curvature,
    theta_tensor,
    torsion,
    verify_commutators,
)
from .derivation import DerivationComponents, apply_derivation, decompose, reconstruct, transform_derivation
from .errors import *  # noqa: F401,F403
from .extfield import ExprField, ExtendedField, FunctionField, check_tensoriality, transport
from .manifest import Manifest, load
from .multitensor import Tensor, Valence
from .report import run
from .smoothexpr import compile_expr, eval_jet2, parse

__all__ = [
    "BundleSpec", "BundleTangent", "Chart", "CurvaturePack", "DerivationComponents", "ExprField",
    "ExtendedConnection", "ExtendedField", "FiberPoint", "FunctionField", "Manifest", "RestrictedField",
    "Section", "Tensor", "Transition", "TransitionData", "Valence", "apply_derivation", "chain_rule_residual",
    "check_tensoriality", "check_theta_duality", "compile_expr", "covariant_differential", "curvature_pack",
    "decompose", "dynamic_curvature", "eval_jet2", "load", "native_field", "omega_tensor", "parse",
    "reconstruct", "restrict", "run", "spatial_covariant", "standard_covariant", "static_curvature",
    "theta_tensor", "torsion", "transform_connection", "transform_derivation", "transform_fiber_point",
    "transition_data", "transport", "verify_commutators", "vertical_derivative", "vertical_differential",
]
