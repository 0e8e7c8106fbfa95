"""Exception types.  Each carries a short machine-readable code."""


class KstError(Exception):
    code = "error"
    exit_code = 1


class InvalidInputError(KstError, ValueError):
    code = "invalid_input"
    exit_code = 2


class RangeError(KstError, IndexError):
    code = "range"
    exit_code = 2


class DegenerateBandwidthError(KstError):
    code = "degenerate_bandwidth"


class NoPlateauError(KstError):
    code = "no_plateau"


class ConnectivityError(KstError):
    code = "connectivity"


class InvalidSpectrumError(KstError):
    code = "invalid_spectrum"


class SolverError(KstError):
    code = "solver"


class AccuracyError(KstError):
    code = "accuracy"


class UnsupportedStateError(KstError):
    code = "unsupported_state"


class FormatError(KstError):
    code = "format"


class DegenerateMetricError(KstError):
    code = "degenerate_metric"


class UnreachableAnchorError(KstError):
    code = "unreachable_anchor"


class BlowUpError(KstError):
    code = "blow_up"
