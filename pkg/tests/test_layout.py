import pytest
from hypothesis import given, strategies as st

from hofforge.errors import ShapeError
from hofforge.layout import (
    Dim, Shape, View, flatten, flip, format_shape, linear_index, offset_set,
    outer_slice, parse_shape, row_major_shape, shape, subdiv,
)


def test_row_major_four_dims():
    s = row_major_shape([3, 2, 5, 4])
    assert s == shape((3, 1), (2, 3), (5, 6), (4, 30))


def test_row_major_single_dim():
    assert row_major_shape([7]) == shape((7, 1))


def test_row_major_two_dims():
    assert row_major_shape([15, 8]) == shape((15, 1), (8, 15))


def test_row_major_rejects_bad_extent():
    with pytest.raises(ShapeError):
        row_major_shape([3, 0])
    with pytest.raises(ShapeError):
        row_major_shape([-1])


def test_subdiv_basic():
    assert subdiv(0, 3, shape((6, 1))) == shape((3, 1), (2, 3))


def test_subdivided_120_element_example():
    s = row_major_shape([15, 8])
    s = subdiv(0, 3, s)
    s = subdiv(2, 2, s)
    s = flip(1, s)
    assert s == shape((3, 1), (2, 15), (5, 3), (4, 30))
    assert format_shape(s) == "((3,1),(2,15),(5,3),(4,30))"


def test_subdiv_full_extent_block():
    assert subdiv(0, 6, shape((6, 1))) == shape((6, 1), (1, 6))


def test_subdiv_rejects_non_divisor():
    with pytest.raises(ShapeError):
        subdiv(0, 4, shape((6, 1)))
    with pytest.raises(ShapeError):
        subdiv(2, 2, shape((6, 1)))


def test_flatten_inverts_subdiv():
    assert flatten(0, subdiv(0, 3, shape((6, 1)))) == shape((6, 1))
    assert flatten(0, shape((3, 1), (2, 3))) == shape((6, 1))


def test_flatten_rejects_non_contiguous():
    with pytest.raises(ShapeError):
        flatten(0, shape((3, 1), (2, 15)))
    with pytest.raises(ShapeError):
        flatten(1, shape((3, 1), (2, 3)))


def test_flip_swaps():
    assert flip(0, shape((15, 1), (8, 15))) == shape((8, 15), (15, 1))


def test_flip_out_of_range():
    with pytest.raises(ShapeError):
        flip(1, shape((4, 1)))


def test_linear_index_values():
    assert linear_index(shape((3, 1), (2, 3)), [2, 1]) == 5
    assert linear_index(shape((3, 1), (2, 3)), [0, 0]) == 0
    assert linear_index(shape((3, 1), (2, 15)), [1, 1]) == 16


def test_linear_index_bounds():
    with pytest.raises(ShapeError):
        linear_index(shape((3, 1)), [3])


def test_aliasing_rejected():
    with pytest.raises(ShapeError):
        Shape((Dim(2, 1), Dim(2, 1)))


def test_extent_one_dims_allowed():
    # degenerate dims reach no extra offsets and must not trip the checker
    Shape((Dim(2, 1), Dim(1, 2), Dim(2, 2)))


def test_outer_slice_rows():
    buf = list(range(12))
    v = View(buf, 0, row_major_shape([4, 3]))  # 3 rows of 4
    row1 = outer_slice(v, 1)
    assert row1.offset == 4 and row1.shape == shape((4, 1))
    assert [row1[(j,)] for j in range(4)] == [4, 5, 6, 7]
    scalar = outer_slice(row1, 2)
    assert scalar.shape.is_scalar and scalar.item() == 6


def test_outer_slice_at_zero_keeps_offset():
    buf = list(range(12))
    v = View(buf, 0, row_major_shape([4, 3]))
    s = outer_slice(v, 0)
    assert s.buffer is buf and s.offset == 0
    assert s.rank == v.rank - 1


def test_outer_slice_bounds():
    v = View([0, 1], 0, shape((2, 1)))
    with pytest.raises(ShapeError):
        outer_slice(v, 2)


def test_view_bounds_checked():
    with pytest.raises(ShapeError):
        View([0, 1, 2], 1, shape((3, 1)))


# -- randomized properties ---------------------------------------------------

extents = st.lists(st.integers(1, 12), min_size=1, max_size=4)


@st.composite
def transformed_shapes(draw):
    """Shapes reachable from row-major construction via subdiv/flip chains."""
    s = row_major_shape(draw(extents))
    for _ in range(draw(st.integers(0, 3))):
        op = draw(st.sampled_from(["subdiv", "flip"]))
        if op == "flip" and s.rank >= 2:
            d = draw(st.integers(0, s.rank - 2))
            s = flip(d, s)
        else:
            d = draw(st.integers(0, s.rank - 1))
            e = s.dims[d].extent
            divisors = [b for b in range(1, e + 1) if e % b == 0]
            s = subdiv(d, draw(st.sampled_from(divisors)), s)
    return s


@given(transformed_shapes(), st.data())
def test_flatten_undoes_subdiv(s, data):
    d = data.draw(st.integers(0, s.rank - 1))
    e = s.dims[d].extent
    b = data.draw(st.sampled_from([x for x in range(1, e + 1) if e % x == 0]))
    assert flatten(d, subdiv(d, b, s)) == s


@given(transformed_shapes(), st.data())
def test_flip_involution_and_symmetry(s, data):
    if s.rank < 2:
        return
    d1 = data.draw(st.integers(0, s.rank - 1))
    d2 = data.draw(st.integers(0, s.rank - 1))
    assert flip(d1, flip(d1, s, d2), d2) == s
    assert flip(d1, s, d2) == flip(d2, s, d1)


@given(transformed_shapes(), st.data())
def test_subdiv_and_flip_preserve_offset_sets(s, data):
    want = offset_set(s)
    d = data.draw(st.integers(0, s.rank - 1))
    e = s.dims[d].extent
    b = data.draw(st.sampled_from([x for x in range(1, e + 1) if e % x == 0]))
    assert offset_set(subdiv(d, b, s)) == want
    if s.rank >= 2:
        d2 = data.draw(st.integers(0, s.rank - 2))
        assert offset_set(flip(d2, s)) == want


@given(extents)
def test_row_major_bijection(ext):
    s = row_major_shape(ext)
    offsets = sorted(linear_index(s, idx) for idx in s.indices())
    assert offsets == list(range(s.size))


@given(transformed_shapes())
def test_outer_slices_partition_offsets(s):
    buf = [0] * (s.max_linear_index() + 1)
    v = View(buf, 0, s)

    def collect(view):
        if view.shape.is_scalar:
            return [view.offset]
        out = []
        for i in range(view.shape.outer.extent):
            out.extend(collect(view.outer_slice(i)))
        return out

    seen = collect(v)
    assert len(seen) == s.size
    assert frozenset(seen) == offset_set(s)


def test_shape_syntax_roundtrip():
    s = shape((3, 1), (2, 15), (5, 3), (4, 30))
    assert parse_shape(format_shape(s)) == s
    assert parse_shape("((7,1))") == shape((7, 1))
    assert parse_shape("()").is_scalar


def test_shape_syntax_rejects_garbage():
    for bad in ["", "(3,1)", "((3,1)", "((a,1))", "((3,1),(x))"]:
        with pytest.raises(ShapeError):
            parse_shape(bad)
