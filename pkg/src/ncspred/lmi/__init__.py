"""Certificate families, feasibility checking and functional evaluation."""

from .affine import Affine, BlockMatrix, Var
from .families import (
    FAMILIES,
    AnalysisContext,
    DesignContext,
    build_family,
    build_lemma1,
    build_lemma2,
    build_prop1,
    build_prop3,
)
from .functional import evaluate_V, functional_terms
from .problem import LmiConstraint, LmiProblem
from .sdpa import export_sdpa, read_sdpa
from .solve import (
    Certificate,
    CvxpyBackend,
    Infeasible,
    SolverContract,
    Unknown,
    check_feasible,
    is_feasible,
    verify,
)
