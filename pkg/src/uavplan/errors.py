"""Exception types shared across the planning library."""


class PlannerError(Exception):
    """Base class for all library-specific errors."""


class InvalidScenario(PlannerError):
    """Scenario violates one or more structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scenario: " + "; ".join(self.violations))


class Infeasible(PlannerError):
    """Requested construction cannot satisfy its kinematic preconditions."""


class DegenerateGeometry(PlannerError):
    """A receiver coincides with the emitter, so ranges/partials are undefined."""


class SingularGeometry(PlannerError):
    """Fisher information matrix is numerically singular for this geometry."""


class NoConvergence(PlannerError):
    """Iterative estimator hit its iteration budget without converging.

    Carries the last iterate so callers can still inspect it.
    """

    def __init__(self, message, estimate=None, report=None):
        super().__init__(message)
        self.estimate = estimate
        self.report = report


class SubproblemInfeasible(PlannerError):
    """Convex trajectory subproblem has no feasible point."""

    def __init__(self, message, violated=()):
        super().__init__(message)
        self.violated = tuple(violated)


class InitializationInfeasible(PlannerError):
    """No feasible initial trajectory exists for the given scenario."""


class NoFeasibleParticle(PlannerError):
    """Every swarm particle violated a penalty constraint in every iteration."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DuplicateKnotSlot(PlannerError):
    """Two spline knots were placed in the same time slot."""


class Unrepairable(PlannerError):
    """Spline plan still violates constraints after the repair budget."""

    def __init__(self, message, plan=None):
        super().__init__(message)
        self.plan = plan
