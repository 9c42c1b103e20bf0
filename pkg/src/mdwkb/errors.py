"""Exception hierarchy shared by all solver modules."""


class MdwkbError(Exception):
    """Base class; carries a machine-readable ``code`` for the CLI."""

    code = "error"


class NonFinitePhase(MdwkbError):
    code = "non-finite-phase"


class CausticExceeded(MdwkbError):
    code = "caustic-exceeded"


class CoverageGap(MdwkbError):
    code = "coverage-gap"


class CFLViolation(MdwkbError):
    code = "cfl-violation"


class ModeMismatch(MdwkbError):
    code = "mode-mismatch"


class HistoryTooShort(MdwkbError):
    code = "history-too-short"


class CharacteristicPhase(MdwkbError):
    code = "characteristic-phase"


class ConservationBreach(MdwkbError):
    code = "conservation-breach"


class MissingOscillatoryPotential(MdwkbError):
    code = "missing-oscillatory-potential"


class ResolutionInsufficient(MdwkbError):
    code = "resolution-insufficient"


class NonPositiveConstant(MdwkbError):
    code = "non-positive-constant"


class FieldIOError(MdwkbError):
    code = "field-io"


class BadMagic(FieldIOError):
    code = "bad-magic"


class DimMismatch(FieldIOError):
    code = "dim-mismatch"


class TruncatedPayload(FieldIOError):
    code = "truncated-payload"


class ConfigError(MdwkbError):
    code = "config"
