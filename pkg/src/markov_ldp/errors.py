"""Exception hierarchy.

Every error carries a module-qualified ``code`` (``"shift.ZeroRowOrColumn"``)
and an ``exit_status`` used by the command-line front end: 2 for invalid
input, 3 for exhausted budgets or precision.
"""


class MarkovLDPError(Exception):
    module = "core"
    exit_status = 2

    @property
    def code(self):
        return f"{self.module}.{type(self).__name__}"


class BudgetError(MarkovLDPError):
    exit_status = 3


class ZeroRowOrColumn(MarkovLDPError):
    module = "shift"


class NoWitnessFound(MarkovLDPError):
    module = "shift"


class InadmissibleWord(MarkovLDPError):
    module = "shift"


class InadmissibleAnchor(MarkovLDPError):
    module = "pressure"


class AlphabetTooLargeForEnumeration(BudgetError):
    module = "potential"


class BudgetExceeded(BudgetError):
    module = "ldp"


class DivergedInterpolation(BudgetError):
    module = "pressure"


class NonconvexSamples(MarkovLDPError):
    module = "ldp"


class AlphaOutsideDomain(MarkovLDPError):
    module = "ldp"


class PrecisionExhausted(BudgetError):
    module = "gauss"


class Terminated(PrecisionExhausted):
    """The expansion of a rational number ended before the requested length."""

    def __init__(self, message, digits):
        super().__init__(message)
        self.digits = digits


class ThetaOutOfRange(MarkovLDPError):
    module = "tightness"


class UnsupportedModel(MarkovLDPError):
    module = "tightness"


class ConfigInvalid(MarkovLDPError):
    module = "cli"
