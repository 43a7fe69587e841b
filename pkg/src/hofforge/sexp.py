"""S-expression program format.

    (input A ((4,1),(3,4)))          array input with its strided shape
    (lam (x y) body)                 function value
    (nzip f a b ...)                 variadic elementwise combinator
    (map f a) / (zip f a b)          arity-1 / arity-2 sugar
    (rnz r m a b ...)                reduce-of-zips
    (reduce r a)                     rnz with the identity zip function
    (subdiv d b a) (flatten d a) (flip d1 d2 a)
    (+ x y) (* x y) (- x y) (/ x y) (min x y) (max x y)
    (const 3.5)

Bare names reference lambda parameters or previously declared inputs; the
primitive symbols stand for function values in function position.  One
top-level expression per file; ``;`` comments to end of line.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError, ShapeError
from .exprs import (
    Const, Expr, Flatten, Flip, InputRef, Lam, NZip, PrimOp, Rnz, Subdiv, Var,
    identity_fn, mk_map, mk_zip, prim_fn,
)
from .layout import Dim, Shape

PRIM_TOKENS = {
    "+": "add",
    "*": "mul",
    "-": "sub",
    "/": "div",
    "min": "min",
    "max": "max",
}


@dataclass(frozen=True)
class _Tok:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r,":
            col += 1
            i += 1
            continue
        if c in "()":
            toks.append(_Tok(c, line, col))
            i += 1
            col += 1
            continue
        j = i
        while j < n and text[j] not in " \t\r\n(),;":
            j += 1
        toks.append(_Tok(text[i:j], line, col))
        col += j - i
        i = j
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        self.shapes: dict[str, Shape] = {}

    def peek(self) -> _Tok | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> _Tok:
        t = self.peek()
        if t is None:
            last = self.toks[-1] if self.toks else _Tok("", 1, 1)
            raise ParseError("unexpected end of input", last.line, last.col)
        self.pos += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, got {t.text!r}", t.line, t.col)
        return t

    # -- shapes -------------------------------------------------------------

    def parse_shape(self) -> Shape:
        open_tok = self.expect("(")
        dims = []
        while True:
            t = self.peek()
            if t is None:
                raise ParseError("unterminated shape", open_tok.line, open_tok.col)
            if t.text == ")":
                self.next()
                break
            self.expect("(")
            e = self._int(self.next())
            s_tok = self.next()
            s = self._int(s_tok)
            self.expect(")")
            try:
                dims.append(Dim(e, s))
            except ShapeError as ex:
                raise ParseError(str(ex), s_tok.line, s_tok.col) from None
        try:
            return Shape(tuple(dims))
        except ShapeError as ex:
            raise ParseError(str(ex), open_tok.line, open_tok.col) from None

    def _int(self, t: _Tok) -> int:
        raw = t.text.strip(",")
        try:
            return int(raw)
        except ValueError:
            raise ParseError(f"expected an integer, got {t.text!r}", t.line, t.col)

    # -- expressions ----------------------------------------------------------

    def parse_expr(self, scopes: list[list[str]]) -> Expr:
        t = self.next()
        if t.text == ")":
            raise ParseError("unexpected ')'", t.line, t.col)
        if t.text != "(":
            return self._atom(t, scopes)
        head = self.next()
        h = head.text
        if h == "input":
            name_t = self.next()
            shape = self.parse_shape()
            self.expect(")")
            prev = self.shapes.get(name_t.text)
            if prev is not None and prev != shape:
                raise ParseError(
                    f"input {name_t.text!r} redeclared with a different shape",
                    name_t.line,
                    name_t.col,
                )
            self.shapes[name_t.text] = shape
            return InputRef(name_t.text)
        if h == "const":
            v_t = self.next()
            self.expect(")")
            return Const(self._num(v_t))
        if h == "lam":
            self.expect("(")
            params = []
            while True:
                p = self.next()
                if p.text == ")":
                    break
                if not p.text.isidentifier():
                    raise ParseError(f"bad parameter name {p.text!r}", p.line, p.col)
                params.append(p.text)
            if not params:
                raise ParseError("lambda needs at least one parameter", head.line, head.col)
            body = self.parse_expr(scopes + [params])
            self.expect(")")
            return Lam(len(params), body)
        if h in PRIM_TOKENS:
            a = self.parse_expr(scopes)
            b = self.parse_expr(scopes)
            self.expect(")")
            return PrimOp(PRIM_TOKENS[h], (a, b))
        if h in ("map", "zip", "nzip"):
            fn = self.parse_expr(scopes)
            arrays = self._until_close(scopes)
            try:
                if h == "map":
                    (a,) = arrays
                    return mk_map(fn, a)
                if h == "zip":
                    a, b = arrays
                    return mk_zip(fn, a, b)
                return NZip(fn, tuple(arrays))
            except ValueError:
                raise ParseError(
                    f"{h} takes {'1 array' if h == 'map' else '2 arrays'}",
                    head.line,
                    head.col,
                ) from None
        if h == "rnz":
            r = self.parse_expr(scopes)
            m = self.parse_expr(scopes)
            arrays = self._until_close(scopes)
            if not arrays:
                raise ParseError("rnz needs at least one array", head.line, head.col)
            return Rnz(r, m, tuple(arrays))
        if h == "reduce":
            r = self.parse_expr(scopes)
            a = self.parse_expr(scopes)
            self.expect(")")
            return Rnz(r, identity_fn(), (a,))
        if h == "subdiv":
            d = self._int(self.next())
            b = self._int(self.next())
            a = self.parse_expr(scopes)
            self.expect(")")
            return Subdiv(d, b, a)
        if h == "flatten":
            d = self._int(self.next())
            a = self.parse_expr(scopes)
            self.expect(")")
            return Flatten(d, a)
        if h == "flip":
            d1 = self._int(self.next())
            d2 = self._int(self.next())
            a = self.parse_expr(scopes)
            self.expect(")")
            return Flip(d1, d2, a)
        raise ParseError(f"unknown form {h!r}", head.line, head.col)

    def _until_close(self, scopes) -> list[Expr]:
        out = []
        while True:
            t = self.peek()
            if t is None:
                raise ParseError("unexpected end of input", 0, 0)
            if t.text == ")":
                self.next()
                return out
            out.append(self.parse_expr(scopes))

    def _atom(self, t: _Tok, scopes) -> Expr:
        if t.text in PRIM_TOKENS:
            return prim_fn(PRIM_TOKENS[t.text])
        try:
            return Const(self._num(t))
        except ParseError:
            pass
        for up, frame in enumerate(reversed(scopes)):
            if t.text in frame:
                return Var(up, frame.index(t.text))
        if t.text in self.shapes:
            return InputRef(t.text)
        raise ParseError(f"unbound name {t.text!r}", t.line, t.col)

    def _num(self, t: _Tok):
        raw = t.text
        try:
            return int(raw)
        except ValueError:
            try:
                return float(raw)
            except ValueError:
                raise ParseError(f"not a number: {raw!r}", t.line, t.col) from None


def parse_program(text: str) -> tuple[Expr, dict[str, Shape]]:
    """Parse one top-level expression; returns it with the declared input
    shapes."""
    p = _Parser(text)
    if p.peek() is None:
        raise ParseError("empty program", 1, 1)
    e = p.parse_expr([])
    t = p.peek()
    if t is not None:
        raise ParseError("trailing tokens after program", t.line, t.col)
    return e, p.shapes


# ---------------------------------------------------------------------------
# printing


_PRIM_SYMS = {v: k for k, v in PRIM_TOKENS.items()}


def print_program(e: Expr, shapes: dict[str, Shape] | None = None) -> str:
    """Round-trippable text; input shapes are attached to each reference's
    first occurrence."""
    shapes = shapes or {}
    declared: set[str] = set()

    def shape_txt(s: Shape) -> str:
        return "(" + ",".join(f"({d.extent},{d.stride})" for d in s.dims) + ")"

    def go(x: Expr, names: list[list[str]]) -> str:
        if isinstance(x, InputRef):
            if x.name in shapes and x.name not in declared:
                declared.add(x.name)
                return f"(input {x.name} {shape_txt(shapes[x.name])})"
            return x.name
        if isinstance(x, Const):
            return f"(const {x.value})"
        if isinstance(x, Var):
            return names[-1 - x.up][x.idx]
        if isinstance(x, Lam):
            frame = [f"x{len(names)}_{i}" for i in range(x.nparams)]
            if x.nparams == 2 and isinstance(x.body, PrimOp) and x.body.args == (
                Var(0, 0),
                Var(0, 1),
            ):
                return _PRIM_SYMS[x.body.op]
            return f"(lam ({' '.join(frame)}) {go(x.body, names + [frame])})"
        if isinstance(x, PrimOp):
            return f"({_PRIM_SYMS[x.op]} {go(x.args[0], names)} {go(x.args[1], names)})"
        if isinstance(x, NZip):
            arrays = " ".join(go(a, names) for a in x.arrays)
            return f"(nzip {go(x.fn, names)} {arrays})"
        if isinstance(x, Rnz):
            arrays = " ".join(go(a, names) for a in x.arrays)
            return f"(rnz {go(x.reduce_fn, names)} {go(x.zip_fn, names)} {arrays})"
        if isinstance(x, Subdiv):
            return f"(subdiv {x.d} {x.b} {go(x.array, names)})"
        if isinstance(x, Flatten):
            return f"(flatten {x.d} {go(x.array, names)})"
        if isinstance(x, Flip):
            return f"(flip {x.d1} {x.d2} {go(x.array, names)})"
        raise TypeError(type(x).__name__)

    return go(e, [])
