"""Exception hierarchy shared across the package."""


class HierProtError(Exception):
    """Base class for all structured errors raised by hierprot."""


# geometry
class DegenerateChain(HierProtError):
    pass


class ZeroVector(HierProtError):
    pass


class DegenerateDihedral(HierProtError):
    pass


# nn
class ShapeMismatch(HierProtError):
    pass


class StaleTape(HierProtError):
    pass


# vae / diffusion
class LevelMismatch(HierProtError):
    pass


class BadTimestep(HierProtError):
    pass


class MissingLevelData(HierProtError):
    pass


class MissingCheckpoint(HierProtError):
    pass


class CannotRemoveSequenceLevel(HierProtError):
    pass


# metrics / meta-eval
class InvalidResidueSymbol(HierProtError):
    pass


class DimensionMismatch(HierProtError):
    pass


class TooFewSamples(HierProtError):
    pass


class LengthMismatch(HierProtError):
    pass


class EmptySequence(HierProtError):
    pass


class MetricArityError(HierProtError):
    pass


class UnknownLabel(HierProtError):
    pass


# io / cli
class MalformedAtomLine(HierProtError):
    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class VersionMismatch(HierProtError):
    pass


class CorruptFile(HierProtError):
    pass


class ConfigError(HierProtError):
    pass
