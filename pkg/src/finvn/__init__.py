"""Finite-dimensional models of finite von Neumann algebras: gauges, orbit limits, similarity."""

from __future__ import annotations

from .algebra import AlgebraElement, BlockAlgebra, TraceFunctional
from .errors import FinvnError
from .gauge import Gauge, almost_limit, analyze_gauge, domination, q_prime, q_tilde
from .limits import (
    OrbitLimitSpec,
    SimilarityConfig,
    SimilarityReport,
    asymptotic_control_report,
    hat_compatibility,
    intertwine_unitaries,
    limit_operator,
    orbit_limit,
    semigroup_limit,
    similarity,
    verify_orbit_laws,
)
from .supermap import SuperOperator, amplify, cp_certificate, positivity_check, tau_adjoint

__all__ = [
    "AlgebraElement", "BlockAlgebra", "TraceFunctional", "FinvnError", "Gauge", "almost_limit",
    "analyze_gauge", "domination", "q_prime", "q_tilde", "OrbitLimitSpec", "SimilarityConfig",
    "SimilarityReport", "asymptotic_control_report", "hat_compatibility", "intertwine_unitaries",
    "limit_operator", "orbit_limit", "semigroup_limit", "similarity", "verify_orbit_laws",
    "SuperOperator", "amplify", "cp_certificate", "positivity_check", "tau_adjoint",
]
