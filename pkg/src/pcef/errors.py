"""Exception types raised across the package."""


class PcefError(Exception):
    """Base class for all package errors."""


class NonMass(PcefError, ValueError):
    """A vector does not describe a valid mass function."""


class DogmaticEvidence(PcefError, ValueError):
    """Evidence with m(Omega) == 0 has no finite weight assignment."""


class TotalConflict(PcefError, ArithmeticError):
    """Dempster normalization mass vanished."""


class LengthMismatch(PcefError, ValueError):
    pass


class NotNeighbors(PcefError, ValueError):
    pass


class DisconnectedGraph(PcefError, ValueError):
    pass


class RankCollapse(PcefError, ArithmeticError):
    """Retraction produced fewer than k usable singular values."""


class DegenerateDirection(PcefError, ArithmeticError):
    """Rank-increase direction vanishes on the observed entries."""


class ZeroNoise(PcefError, ValueError):
    """A privacy noise schedule with no effect was requested."""


class NotConverged(PcefError, ArithmeticError):
    pass


class InfeasibleAttack(PcefError):
    """The adversary's view does not determine the target's evidence.

    This is the expected outcome whenever the target has a neighbor the
    adversary cannot observe.
    """


class ConfigError(PcefError, ValueError):
    pass
