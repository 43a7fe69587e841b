"""Exception types shared across the package."""


class HofforgeError(Exception):
    pass


class ShapeError(HofforgeError, ValueError):
    """Invalid layout operation: bad extent, non-divisor block, aliasing, bounds."""


class InferenceError(HofforgeError, ValueError):
    """Expression is ill-typed: extent mismatch, scalar where array expected, ..."""


class SideConditionError(HofforgeError, ValueError):
    """A rewrite's side condition does not hold (e.g. non-associative reduction)."""


class SpineError(HofforgeError, ValueError):
    """Expression does not have a linear higher-order-function nesting."""


class ParseError(HofforgeError, ValueError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)
