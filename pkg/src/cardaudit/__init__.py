"""Card-level comparison risk-limiting audits with card-style sample targeting."""

from .models import (
    AuditSpec,
    BallotManifest,
    CardRecord,
    ConsistencyReport,
    Contest,
    ErrorModel,
    RiskFunction,
    card_style,
    load_audit_spec,
    make_phantoms,
    tabulate_reported,
    validate,
)
from .assertions import (
    Assertion,
    AssorterSpec,
    assort,
    build_assertions,
    overstatement,
    overstatement_assorter,
    set_margin,
)
from .risk import (
    AlphaState,
    alpha_step,
    estimate_sample_size,
    measure_risk,
    optimal_eta,
    p_value,
)
from .sampling import (
    RoundPlan,
    assign_sample_numbers,
    consistent_sample,
    plan_round,
    retrieval_list,
)
from .ingest import parse_cvrs, parse_manifest, parse_mvrs

__version__ = "0.1.0"

__all__ = [
    "AlphaState",
    "Assertion",
    "AssorterSpec",
    "AuditSpec",
    "BallotManifest",
    "CardRecord",
    "ConsistencyReport",
    "Contest",
    "ErrorModel",
    "RiskFunction",
    "RoundPlan",
    "alpha_step",
    "assign_sample_numbers",
    "assort",
    "build_assertions",
    "card_style",
    "consistent_sample",
    "estimate_sample_size",
    "load_audit_spec",
    "make_phantoms",
    "measure_risk",
    "optimal_eta",
    "overstatement",
    "overstatement_assorter",
    "p_value",
    "parse_cvrs",
    "parse_manifest",
    "parse_mvrs",
    "plan_round",
    "retrieval_list",
    "set_margin",
    "tabulate_reported",
    "validate",
]
