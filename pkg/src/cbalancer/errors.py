"""Exception hierarchy.

Every error carries a short ``category`` string so the CLI can report a
machine-readable failure class.
"""


class CBalancerError(Exception):
    category = "Error"


class InvalidConfig(CBalancerError, ValueError):
    category = "InvalidConfig"


class UnknownNode(CBalancerError, KeyError):
    category = "UnknownNode"

    def __str__(self):
        return Exception.__str__(self)


class EmptyCluster(CBalancerError, ValueError):
    category = "EmptyCluster"


class NoSample(CBalancerError, LookupError):
    category = "NoSample"


class LengthMismatch(CBalancerError, ValueError):
    category = "LengthMismatch"


class EmptyInput(CBalancerError, ValueError):
    category = "EmptyInput"


class NoFeasibleNode(CBalancerError, RuntimeError):
    category = "NoFeasibleNode"


class SameNode(CBalancerError, ValueError):
    category = "SameNode"


class UnknownContainer(CBalancerError, KeyError):
    category = "UnknownContainer"

    def __str__(self):
        return Exception.__str__(self)


class ContainerVanished(CBalancerError, RuntimeError):
    category = "ContainerVanished"


class ContainerRunning(CBalancerError, RuntimeError):
    category = "ContainerRunning"


class UnknownImage(CBalancerError, KeyError):
    category = "UnknownImage"

    def __str__(self):
        return Exception.__str__(self)


class MalformedTopic(CBalancerError, ValueError):
    category = "MalformedTopic"


class StaleSnapshot(CBalancerError, RuntimeError):
    category = "StaleSnapshot"


class ParseError(CBalancerError, ValueError):
    category = "ParseError"


class ValidationError(CBalancerError, ValueError):
    category = "ValidationError"
