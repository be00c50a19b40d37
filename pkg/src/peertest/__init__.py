"""Tests for the presence of peer effects in balanced panels without a known network."""

from .ar import (
    FE_VARIANTS,
    ChisqDecision,
    TestResult,
    TslsResult,
    ar_fe,
    ar_fe_variants,
    ar_no_fe,
    decide_chisq,
    decide_normal,
    fe_variance,
    residualize,
    tsls_peer_test,
)
from .cli import RollingSpec, load_panel, rolling_ar, run_cli, wins_produced
from .errors import (
    DegenerateX,
    DimensionMismatch,
    DuplicateCell,
    InstanceTooLarge,
    MissingCell,
    NonFiniteValue,
    NonNumericValue,
    NonPositivePhi,
    NumericalError,
    PeertestError,
    RankCollapse,
    SingularSystem,
    TooManyInstruments,
    UnbalancedPanel,
    ValidationError,
    WeakOrCollinearIV,
)
from .instruments import (
    InstrumentMatrix,
    IvSpec,
    PeerStructure,
    ZMatrix,
    assemble_Q,
    build_Z,
    default_peer_structure,
)
from .kurtosis import KurtosisEstimate, excess_kurtosis, pi_constants
from .panel import (
    Panel,
    TransformedPanel,
    build_J,
    demean_two_way,
    stack_index,
    validate_panel,
    within_transform,
)
from .projection import (
    ProjectionBundle,
    kron_bundle,
    orthonormalize,
    quad_form_P,
    quad_form_P_minus_D,
    trace_phi,
)
from .simulate import (
    McConfig,
    McResult,
    gen_circular_alpha,
    gen_panel,
    gen_random_graph_alpha,
    result_rows,
    run_mc,
)

__version__ = "0.1.0"

__all__ = [
    "ChisqDecision", "DegenerateX", "DimensionMismatch", "DuplicateCell",
    "FE_VARIANTS", "InstanceTooLarge", "InstrumentMatrix", "IvSpec",
    "KurtosisEstimate", "McConfig", "McResult", "MissingCell", "NonFiniteValue",
    "NonNumericValue", "NonPositivePhi", "NumericalError", "Panel",
    "PeerStructure", "PeertestError", "ProjectionBundle", "RankCollapse",
    "RollingSpec", "SingularSystem", "TestResult", "TooManyInstruments",
    "TransformedPanel", "TslsResult", "UnbalancedPanel", "ValidationError",
    "WeakOrCollinearIV", "ZMatrix", "ar_fe", "ar_fe_variants", "ar_no_fe",
    "assemble_Q", "build_J", "build_Z", "decide_chisq", "decide_normal",
    "default_peer_structure", "demean_two_way", "excess_kurtosis", "fe_variance",
    "gen_circular_alpha", "gen_panel", "gen_random_graph_alpha", "kron_bundle",
    "load_panel", "orthonormalize", "pi_constants", "quad_form_P",
    "quad_form_P_minus_D", "residualize", "result_rows", "rolling_ar", "run_cli",
    "run_mc", "stack_index", "trace_phi", "tsls_peer_test",
    "validate_panel", "wins_produced", "within_transform",
]
