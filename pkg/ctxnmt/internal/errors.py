# internal/errors.py

# one exception hierarchy for the whole toolkit; CLI catches CtxNmtError at the top

from __future__ import annotations


class CtxNmtError(Exception):
    """Base class for every error raised on purpose by ctxnmt."""


class ContractError(CtxNmtError, ValueError):
    """API misuse: empty sequences, unknown token ids, non-scalar loss, ..."""


class DimensionError(ContractError):
    """Shape mismatch between operands."""


class ConfigError(CtxNmtError, ValueError):
    """Invalid configuration value (run config, strategy config, synth spec, optimizer)."""


class ParseError(CtxNmtError, ValueError):
    """Malformed input file. Message carries file/document/line context."""


class NumericError(CtxNmtError, ArithmeticError):
    """NaN or Inf showed up in a forward value or a gradient."""


class IntegrityError(CtxNmtError):
    """Corrupt or mismatched model file."""
