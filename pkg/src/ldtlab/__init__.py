"""Laboratory for line-point low-degree testing over prime finite fields.

Layers, bottom up: ``algebra`` (exact field, polynomial, and linear algebra
primitives), ``geometry`` (affine lines, planes, and incidence graphs),
``rsline`` (per-line best-fit and list decoding), ``ldt`` (tables, oracles,
and the line-point test), ``bidecoder`` (bivariate high-error decoding
through structured grids and pencils), ``corrector`` (plurality and advice
self-correction plus the m-variate decoder), and ``harness`` (instance
generation, experiments, reports, CLI).
"""

from .algebra import (
    MonomialSupport,
    MultiPoly,
    Poly,
    PrimeField,
    discriminant,
    enumerate_support,
    hasse_derivative,
    resultant,
)
from .bidecoder import Explainer, PencilInstance, StructuredGrid, decode_bivariate
from .corrector import (
    CorrectedTable,
    advice_correct,
    decode_multivariate,
    delta_f,
    iterate_correct,
    plurality_correct,
)
from .geometry import IncidenceGraph, Line, Plane, incidence_graph, second_eigenvalue
from .harness import (
    CODE_VERSION,
    ExperimentConfig,
    TestReport,
    emit_report,
    parse_report,
    plant_instance,
    preset,
    run_experiment,
    run_many,
)
from .ldt import (
    LinesOracle,
    PointsTable,
    accept_prob_exact,
    canonical_oracle,
    delta_profile,
    load_table,
    make_well_behaved,
    save_table,
)
from .rsline import best_fit, list_decode, unique_decode

__version__ = CODE_VERSION

__all__ = [
    "CODE_VERSION",
    "CorrectedTable",
    "Explainer",
    "ExperimentConfig",
    "IncidenceGraph",
    "Line",
    "LinesOracle",
    "MonomialSupport",
    "MultiPoly",
    "PencilInstance",
    "Plane",
    "PointsTable",
    "Poly",
    "PrimeField",
    "StructuredGrid",
    "TestReport",
    "accept_prob_exact",
    "advice_correct",
    "best_fit",
    "canonical_oracle",
    "decode_bivariate",
    "decode_multivariate",
    "delta_f",
    "delta_profile",
    "discriminant",
    "emit_report",
    "enumerate_support",
    "hasse_derivative",
    "incidence_graph",
    "iterate_correct",
    "list_decode",
    "load_table",
    "make_well_behaved",
    "parse_report",
    "plant_instance",
    "plurality_correct",
    "preset",
    "resultant",
    "run_experiment",
    "run_many",
    "save_table",
    "second_eigenvalue",
    "unique_decode",
    "__version__",
]
