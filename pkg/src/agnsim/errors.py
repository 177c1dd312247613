class ConfigError(ValueError):
    """Inconsistent or malformed configuration, raised before any compute."""


class ParseError(ValueError):
    """Malformed input file (IDX payloads, trace CSVs)."""


class NumericalFault(FloatingPointError):
    """A NaN or Inf reached a place where it must not propagate silently."""


class DegenerateReport(ZeroDivisionError):
    """Temporal efficiency requested against a zero performance surface."""
