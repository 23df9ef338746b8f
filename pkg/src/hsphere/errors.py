"""Exception hierarchy shared by all modules."""


class HSphereError(Exception):
    """Base class for all errors raised by hsphere."""

    #: machine-readable code written to reports and used for CLI exit status
    code = "error"


# target
class OutsideTubularNeighborhood(HSphereError):
    code = "outside_tubular_neighborhood"


class PointOffManifold(HSphereError):
    code = "point_off_manifold"


# mesh
class SubdivisionOutOfRange(HSphereError):
    code = "subdivision_out_of_range"


class IndexOutOfRange(HSphereError):
    code = "index_out_of_range"


# solve
class SolverError(HSphereError):
    code = "solver_error"


class MaxItersExceeded(SolverError):
    code = "max_iters_exceeded"


class LineSearchStalled(SolverError):
    code = "line_search_stalled"


class InvalidSweepout(SolverError):
    code = "invalid_sweepout"


class BudgetExhausted(SolverError):
    code = "budget_exhausted"

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


# spectrum
class EigSolverFailure(SolverError):
    code = "eig_solver_failure"


class TargetNotThreeDimensional(SolverError):
    code = "target_not_three_dimensional"


class DegenerateImmersion(SolverError):
    code = "degenerate_immersion"


class NotNearCritical(UserWarning):
    """Warning: a Hessian/Jacobi quantity was evaluated away from a critical point."""


# diagnose
class RadiusOutOfChart(HSphereError):
    code = "radius_out_of_chart"


class NoContinuationData(HSphereError):
    code = "no_continuation_data"


# cli / io
class ConfigParse(HSphereError):
    code = "config_parse"


class ValidationFailed(HSphereError):
    code = "validation_failed"


class FormatError(HSphereError):
    code = "format_error"


class MeshMismatch(HSphereError):
    code = "mesh_mismatch"
