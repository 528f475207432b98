"""Exception types shared across the package."""


class QresError(Exception):
    """Base class for all package errors."""


class DegenerateGenerator(QresError, ValueError):
    """The generator vector is isotropic (its bilinear square vanishes)."""


class StepTooLarge(QresError, ValueError):
    pass


class DivergedError(QresError, ArithmeticError):
    """A weak value diverges because the post-selection overlap vanishes.

    ``overlap`` carries the raw transition amplitude (or the denominator that
    vanished) so callers can decide how to report the asymptote.
    """

    def __init__(self, message, overlap=0.0):
        super().__init__(message)
        self.overlap = overlap


# alias kept so both names read naturally at call sites
DivergedOverlap = DivergedError


class ZeroBaseProbability(QresError, ValueError):
    pass


class ValidationError(QresError, ValueError):
    """One or more configuration values violate their invariants.

    ``problems`` is a list of ``(key, reason)`` pairs.
    """

    def __init__(self, problems):
        if isinstance(problems, tuple) and len(problems) == 2 and isinstance(problems[0], str):
            problems = [problems]
        self.problems = list(problems)
        text = "; ".join(f"{k}: {r}" for k, r in self.problems)
        super().__init__(text)

    @property
    def key(self):
        return self.problems[0][0] if self.problems else None

    @property
    def reason(self):
        return self.problems[0][1] if self.problems else None


InvalidConfig = ValidationError


class ParseError(QresError, ValueError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class InsufficientData(QresError, ValueError):
    pass


class NonConvergence(QresError, RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class OutOfRange(QresError, ValueError):
    pass


class MissingFieldSign(QresError, ValueError):
    pass


class NoPeak(QresError, ValueError):
    """A resonance curve has no interior maximum or never falls to half height."""
