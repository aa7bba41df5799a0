"""Exception hierarchy for the solver."""


class PNPError(Exception):
    """Base class for all solver errors."""


class ChargeError(PNPError, ValueError):
    pass


class DuplicateChargePosition(ChargeError):
    pass


class ChargeOutsideDomain(ChargeError):
    pass


class ZeroStrength(ChargeError):
    pass


class EvaluationAtSingularity(PNPError, ValueError):
    pass


class QuadratureNonconvergence(PNPError, RuntimeError):
    pass


class LinearSolverDivergence(PNPError, RuntimeError):
    pass


class PicardNonconvergence(PNPError, RuntimeError):
    pass


class CCPBNonconvergence(PNPError, RuntimeError):
    pass


class NegativeInitialData(PNPError, ValueError):
    pass


class NegativeDensityInEnergy(PNPError, ValueError):
    pass


class DivisionByZeroSample(PNPError, ValueError):
    pass


class ConstantFieldInPoincareProbe(PNPError, ValueError):
    pass


class ThetaOutOfRange(PNPError, ValueError):
    pass


class ConfigError(PNPError):
    """Raised for malformed or invalid configuration files."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


class ValidationError(ConfigError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class StabilityWarning(UserWarning):
    """H(t) left its expected sub-level set; informational only."""


class AdmissibilityWarning(UserWarning):
    """A charge strength lies outside the proven well-posedness range."""
