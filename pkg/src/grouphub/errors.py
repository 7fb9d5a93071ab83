"""Exception types shared across the package."""


class GroupHubError(Exception):
    """Base class for all grouphub errors."""


class DimensionMismatch(GroupHubError):
    pass


class NonBinaryEntry(GroupHubError):
    def __init__(self, t, j):
        self.t = t
        self.j = j
        super().__init__(f"entry at group {t}, node {j} is not 0/1")


class EmptyGroupInfeasible(GroupHubError):
    def __init__(self, t):
        self.t = t
        super().__init__(
            f"group {t} is empty; infeasible under the asymmetric model "
            "(a hub always appears in its own group)"
        )


class NTooLarge(GroupHubError):
    pass


class IndexOutOfRange(GroupHubError):
    pass


class InvalidParams(GroupHubError):
    pass


class ZeroProbabilityGroup(GroupHubError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"group {t} has zero probability under every active component")


class AllRestartsFailed(GroupHubError):
    pass


class SearchSpaceTooLarge(GroupHubError):
    pass


class NonFiniteObjective(GroupHubError):
    pass


class InvalidSpec(GroupHubError):
    pass


class EmptyTrueSet(GroupHubError):
    pass
