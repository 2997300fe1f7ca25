"""Exception types shared across the package."""


class ErgodicQTError(Exception):
    pass


class MixedGroups(ErgodicQTError):
    pass


class ResourceLimit(ErgodicQTError):
    pass


class EmptySet(ErgodicQTError):
    pass


class InsufficientSequence(ErgodicQTError):
    pass


class NonMonotoneBetas(ErgodicQTError):
    pass


class DomainError(ErgodicQTError, ValueError):
    pass


class IndexOutOfRange(ErgodicQTError, IndexError):
    pass


class TilingInfeasible(ErgodicQTError):
    """Raised when a density or cover target cannot be met.

    ``diagnostics`` carries the verification report of the partial tiling and
    ``tiling`` the partial tiling itself (when one was built).
    """

    def __init__(self, message, diagnostics=None, tiling=None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.tiling = tiling


class BadTileChain(ErgodicQTError):
    pass


class OutOfWindow(ErgodicQTError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class Unsupported(ErgodicQTError):
    pass


class UnsupportedModel(Unsupported):
    pass


class EigensolverFailure(ErgodicQTError):
    def __init__(self, message, instance=None):
        super().__init__(message)
        self.instance = instance


class WitnessMissing(ErgodicQTError):
    pass


class TilingUnverified(ErgodicQTError):
    pass


class NotASubset(ErgodicQTError):
    pass
