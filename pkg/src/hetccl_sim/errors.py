"""Exception hierarchy shared by every layer of the simulator."""


class HetCCLError(Exception):
    """Base class for all simulator errors."""


# runtime / registry
class DuplicatePlatform(HetCCLError):
    pass


class IncompleteTable(HetCCLError):
    def __init__(self, missing):
        self.missing = tuple(sorted(missing))
        super().__init__(f"backend table is missing entries: {', '.join(self.missing)}")


class NoPlatform(HetCCLError):
    pass


class AmbiguousPlatform(HetCCLError):
    pass


class UnknownCall(HetCCLError):
    pass


class UnregisteredPlatform(HetCCLError):
    pass


# memory
class ZeroSize(HetCCLError, ValueError):
    pass


class NoNic(HetCCLError):
    pass


class CrossPlatformCopy(HetCCLError):
    pass


class SizeMismatch(HetCCLError, ValueError):
    pass


# topology
class TopologyError(HetCCLError):
    """Base for config problems; carries a location such as ``nodes[2].pcie``."""

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class ParseError(TopologyError):
    pass


class MissingField(TopologyError):
    pass


class MixedVendorNode(TopologyError):
    pass


class NoRdmaPath(HetCCLError):
    pass


# transport
class InvalidRegion(HetCCLError):
    pass


class EndpointMismatch(HetCCLError, ValueError):
    pass


# collectives
class MixedGroup(HetCCLError):
    pass


class LengthMismatch(HetCCLError, ValueError):
    pass


class InvalidRoot(HetCCLError, ValueError):
    pass


# balancer
class ZeroBatch(HetCCLError, ValueError):
    pass


class RankMismatch(HetCCLError, ValueError):
    pass


# bench
class SelfCheckFailed(HetCCLError):
    pass
