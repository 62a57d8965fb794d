"""Exception types raised by the solvers and kernels."""


class LowRankError(Exception):
    """Base class for every error raised by this package."""


class RankDeficient(LowRankError):
    pass


class DidNotConverge(LowRankError):
    pass


class ZeroMatrix(LowRankError):
    pass


class ShapeMismatch(LowRankError, ValueError):
    pass


class IndexOutOfBounds(LowRankError, IndexError):
    pass


class DegenerateInit(LowRankError):
    pass


class NotOrthonormal(LowRankError):
    pass


class ClippedToRankDeficient(RankDeficient):
    pass


class EmptyPartition(LowRankError):
    pass


class InsufficientTrace(LowRankError):
    pass


class ConfigInvalid(LowRankError, ValueError):
    """Invalid experiment configuration.

    ``errors`` maps each offending field to a message.
    """

    def __init__(self, errors):
        self.errors = dict(errors)
        msg = "; ".join(f"{k}: {v}" for k, v in sorted(self.errors.items()))
        super().__init__(msg)
