"""Strided multidimensional array model.

A Shape is an ordered list of (extent, stride) dimension descriptors, stored
innermost-first: dims[0] is the fastest-varying dimension under row-major
construction, dims[-1] is the outermost one, which is what the higher-order
functions consume.  Strides count elements, not bytes.

The three layout operations (subdiv, flatten, flip) only rewrite the
descriptor list; they never move data.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import ShapeError


@dataclass(frozen=True, slots=True)
class Dim:
    extent: int
    stride: int

    def __post_init__(self):
        if self.extent < 1:
            raise ShapeError(f"extent must be >= 1, got {self.extent}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")


@dataclass(frozen=True, slots=True)
class Shape:
    """Dimension descriptors, innermost-first.  Empty dims = scalar."""

    dims: tuple[Dim, ...]

    def __post_init__(self):
        _check_no_aliasing(self.dims)

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def is_scalar(self) -> bool:
        return not self.dims

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(d.extent for d in self.dims)

    @property
    def size(self) -> int:
        n = 1
        for d in self.dims:
            n *= d.extent
        return n

    @property
    def outer(self) -> Dim:
        if not self.dims:
            raise ShapeError("scalar shape has no outermost dimension")
        return self.dims[-1]

    def max_linear_index(self) -> int:
        return sum((d.extent - 1) * d.stride for d in self.dims)

    def indices(self) -> Iterator[tuple[int, ...]]:
        """All multi-indices, outermost dimension varying slowest."""
        return _iter_indices(self.extents)

    def __str__(self) -> str:
        return format_shape(self)


def _iter_indices(extents: Sequence[int]) -> Iterator[tuple[int, ...]]:
    if not extents:
        yield ()
        return
    for outer in range(extents[-1]):
        for inner in _iter_indices(extents[:-1]):
            yield inner + (outer,)


def _check_no_aliasing(dims: tuple[Dim, ...]) -> None:
    # Sufficient condition for the index map to be injective: sorted by
    # stride, each stride must cover the span of everything finer.  Every
    # shape reachable from row_major_shape via subdiv/flatten/flip satisfies
    # it with equality; padded rows satisfy it with slack.  Extent-1 dims
    # contribute nothing to the map and are ignored.
    span = 1
    for d in sorted((d for d in dims if d.extent > 1), key=lambda d: d.stride):
        if d.stride < span:
            raise ShapeError(f"aliasing layout: {tuple((x.extent, x.stride) for x in dims)}")
        span = d.stride * d.extent


def shape(*pairs: tuple[int, int]) -> Shape:
    return Shape(tuple(Dim(e, s) for e, s in pairs))


def row_major_shape(extents: Sequence[int]) -> Shape:
    """Row-major Shape from extents listed innermost first.

    dims[0] gets stride 1; dims[k] gets the product of extents 0..k-1.
    """
    if any(e < 1 for e in extents):
        raise ShapeError(f"extents must all be >= 1, got {list(extents)}")
    dims = []
    stride = 1
    for e in extents:
        dims.append(Dim(e, stride))
        stride *= e
    return Shape(tuple(dims))


def subdiv(d: int, b: int, s: Shape) -> Shape:
    """Split dimension d into blocks of size b.

    (e_d, s_d) becomes (b, s_d) at d and (e_d/b, b*s_d) at d+1; dims below d
    are unchanged, dims above shift up by one.
    """
    if not 0 <= d < s.rank:
        raise ShapeError(f"dimension {d} out of range for rank {s.rank}")
    old = s.dims[d]
    if b < 1 or old.extent % b != 0:
        raise ShapeError(f"block size {b} does not divide extent {old.extent}")
    dims = (
        s.dims[:d]
        + (Dim(b, old.stride), Dim(old.extent // b, b * old.stride))
        + s.dims[d + 1 :]
    )
    return Shape(dims)


def flatten(d: int, s: Shape) -> Shape:
    """Merge dimensions d and d+1; the inverse of subdiv.

    Requires s_{d+1} = e_d * s_d, i.e. the pair is contiguous in the sense
    subdiv produces, so the merged index map means what it meant before.
    """
    if not 0 <= d < s.rank - 1:
        raise ShapeError(f"dimension {d} out of range for flatten on rank {s.rank}")
    lo, hi = s.dims[d], s.dims[d + 1]
    if hi.stride != lo.extent * lo.stride:
        raise ShapeError(
            f"dims {d},{d+1} not flattenable: stride {hi.stride} != {lo.extent}*{lo.stride}"
        )
    dims = s.dims[:d] + (Dim(lo.extent * hi.extent, lo.stride),) + s.dims[d + 2 :]
    return Shape(dims)


def flip(d1: int, s: Shape, d2: int | None = None) -> Shape:
    """Swap dimensions d1 and d2 (extent and stride together); d2 defaults
    to d1+1."""
    if d2 is None:
        d2 = d1 + 1
    for d in (d1, d2):
        if not 0 <= d < s.rank:
            raise ShapeError(f"dimension {d} out of range for rank {s.rank}")
    dims = list(s.dims)
    dims[d1], dims[d2] = dims[d2], dims[d1]
    return Shape(tuple(dims))


def linear_index(s: Shape, idx: Sequence[int]) -> int:
    if len(idx) != s.rank:
        raise ShapeError(f"index rank {len(idx)} != shape rank {s.rank}")
    off = 0
    for i, d in zip(idx, s.dims):
        if not 0 <= i < d.extent:
            raise ShapeError(f"coordinate {i} out of range for extent {d.extent}")
        off += i * d.stride
    return off


def offset_set(s: Shape) -> frozenset[int]:
    """Set of linear offsets reachable from the shape's index domain."""
    return frozenset(linear_index(s, idx) for idx in _iter_indices(s.extents))


@dataclass(frozen=True, slots=True)
class View:
    """A window into a linear buffer: base offset plus a Shape.

    ``buffer`` is any random-access sequence of elements (list, numpy array).
    Views never copy; outer_slice just adjusts the offset.
    """

    buffer: object
    offset: int
    shape: Shape

    def __post_init__(self):
        if self.offset < 0:
            raise ShapeError(f"negative view offset {self.offset}")
        if self.offset + self.shape.max_linear_index() >= len(self.buffer):
            raise ShapeError(
                f"view exceeds buffer: offset {self.offset} + reach "
                f"{self.shape.max_linear_index()} >= length {len(self.buffer)}"
            )

    @property
    def rank(self) -> int:
        return self.shape.rank

    def outer_slice(self, i: int) -> "View":
        """Drop the outermost dimension, selecting its i-th slice."""
        d = self.shape.outer
        if not 0 <= i < d.extent:
            raise ShapeError(f"slice index {i} out of range for extent {d.extent}")
        return View(self.buffer, self.offset + i * d.stride, Shape(self.shape.dims[:-1]))

    def relayout(self, s: Shape) -> "View":
        return View(self.buffer, self.offset, s)

    def item(self) -> object:
        if not self.shape.is_scalar:
            raise ShapeError("item() on non-scalar view")
        return self.buffer[self.offset]

    def __getitem__(self, idx: Sequence[int]) -> object:
        return self.buffer[self.offset + linear_index(self.shape, idx)]

    def tolist(self):
        """Materialize as nested lists, outermost dimension first."""
        if self.shape.is_scalar:
            return self.item()
        return [self.outer_slice(i).tolist() for i in range(self.shape.outer.extent)]


def outer_slice(v: View, i: int) -> View:
    return v.outer_slice(i)


_SHAPE_RE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")


def format_shape(s: Shape) -> str:
    return "(" + ",".join(f"({d.extent},{d.stride})" for d in s.dims) + ")"


def parse_shape(text: str) -> Shape:
    """Parse ``((e0,s0),(e1,s1),...)``, innermost-first.  ``()`` is scalar."""
    t = text.strip()
    if not (t.startswith("(") and t.endswith(")")):
        raise ShapeError(f"malformed shape syntax: {text!r}")
    body = t[1:-1]
    if not body.strip():
        return Shape(())
    pairs = _SHAPE_RE.findall(body)
    stripped = _SHAPE_RE.sub("", body).replace(",", "").strip()
    if not pairs or stripped:
        raise ShapeError(f"malformed shape syntax: {text!r}")
    return Shape(tuple(Dim(int(e), int(st)) for e, st in pairs))
