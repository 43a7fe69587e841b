"""hofforge: rewrite-driven optimizer for dense array programs built from
variadic map/zip/reduce over strided views."""

__version__ = "0.1.0"

from .errors import (
    HofforgeError, InferenceError, ParseError, ShapeError, SideConditionError,
    SpineError,
)
from .layout import Dim, Shape, View, flatten, flip, linear_index, row_major_shape, subdiv

__all__ = [
    "Dim", "Shape", "View",
    "row_major_shape", "subdiv", "flatten", "flip", "linear_index",
    "HofforgeError", "ShapeError", "InferenceError", "SideConditionError",
    "SpineError", "ParseError",
]
