"""Exception types shared across the package."""


class CecflowError(Exception):
    """Base class for all package errors."""


class LoopDetected(CecflowError):
    """A routing strategy contains a data or result loop.

    Attributes:
        task: index of the offending task.
        flow_class: "data" or "result".
        cycle: witness cycle as a node list, first node repeated at the end.
    """

    def __init__(self, task, flow_class, cycle):
        self.task = task
        self.flow_class = flow_class
        self.cycle = list(cycle)
        super().__init__(
            f"{flow_class} loop for task {task}: {'->'.join(map(str, self.cycle))}"
        )


class InfeasibleState(CecflowError):
    """An operation required a finite-cost flow state but got an infeasible one."""


class NoFeasibleStart(CecflowError):
    """No loop-free strategy with finite cost could be constructed."""


class NoFeasibleDirection(CecflowError):
    """All options of a strategy row are blocked; the projection has no feasible set."""


class ProtocolStall(CecflowError):
    """The broadcast protocol deadlocked; some nodes never resolved their marginals."""

    def __init__(self, waiting):
        self.waiting = sorted(waiting)
        super().__init__(f"protocol stalled; waiting nodes: {self.waiting}")


class SizeLimit(CecflowError):
    """Instance is too large for exhaustive search."""
