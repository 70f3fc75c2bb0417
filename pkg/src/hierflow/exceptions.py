# exceptions.py
"""
Error types raised by the hierflow library.
The CLI maps input errors to exit code 2 and numerical degeneracy to exit code 3.
"""


class HierflowError(Exception):
    """Base class for all hierflow errors"""


class InputValidationError(HierflowError, ValueError):
    """Invalid input data (files, node sets, parameter ranges)"""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EdgeListParseError(InputValidationError):
    """Malformed row in a CSV input file"""


class UnsupportedConfigurationError(HierflowError, ValueError):
    """Configuration accepted by the surface but not supported at runtime"""


class DegenerateFitError(HierflowError, ArithmeticError):
    """A closed-form update has no positive denominator"""

    def __init__(self, message, node=None, bin_id=None):
        super().__init__(message)
        self.node = node
        self.bin_id = bin_id


class ModelEvaluationError(HierflowError, ArithmeticError):
    """Objective evaluation hit a zero model value"""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair
