"""Scalar expression evaluation with SQL-style three-valued logic.

Runtime values: None is SQL NULL; bool/int/float map onto bool, i32/i64,
f64; decimal values are decimal.Decimal; date/timestamp/char kinds are
strings (ISO-8601 dates order correctly as text).
"""

from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal
from typing import Optional

from . import ir


def runtime_literal(dtype: ir.DataType, value):
    """Convert a plan literal into its runtime value."""
    if value is None:
        return None
    if dtype.kind == "decimal":
        return Decimal(value)
    if dtype.kind == "f64":
        return float(value)
    return value


def plain_literal(dtype: ir.DataType, value):
    """Inverse of runtime_literal: runtime value back to a plan literal."""
    if value is None:
        return None
    if dtype.kind == "decimal":
        return str(value)
    return value


def _quantize(value: Decimal, dtype: ir.DataType) -> Decimal:
    q = Decimal(1).scaleb(-dtype.scale)
    return value.quantize(q, rounding=ROUND_HALF_UP)


def _arith(fn: str, dtype: ir.DataType, a, b):
    if a is None or b is None:
        return None
    if fn == "add":
        r = a + b
    elif fn == "sub":
        r = a - b
    elif fn == "mul":
        r = a * b
    elif fn == "div":
        if dtype.kind == "f64":
            if float(b) == 0.0:
                return None
            return float(a) / float(b)
        if b == 0:
            return None
        # integer division truncates toward zero
        q = abs(a) // abs(b)
        return q if (a >= 0) == (b >= 0) else -q
    else:
        raise ValueError(fn)
    if dtype.kind == "decimal":
        return _quantize(r, dtype)
    if dtype.kind == "i32":
        # wrap into signed 32-bit like a fixed-width engine would
        r = (r + 2**31) % 2**32 - 2**31
    return r


def _compare(fn: str, a, b) -> Optional[bool]:
    if a is None or b is None:
        return None
    if fn == "eq":
        return a == b
    if fn == "ne":
        return a != b
    if fn == "lt":
        return a < b
    if fn == "le":
        return a <= b
    if fn == "gt":
        return a > b
    if fn == "ge":
        return a >= b
    raise ValueError(fn)


def _cast(value, src: ir.DataType, dst: ir.DataType):
    if value is None:
        return None
    k = dst.kind
    if k in ("i32", "i64"):
        return int(value)
    if k == "f64":
        return float(value)
    if k == "decimal":
        return _quantize(Decimal(value), dst)
    if k == "varchar":
        s = str(value)
        if src.kind == "fixedchar":
            s = s.rstrip(" ")
        return s[:dst.length]
    if k == "fixedchar":
        return str(value)[:dst.length].ljust(dst.length)
    if k == "timestamp" and src.kind == "date":
        return value + "T00:00:00"
    return value


def eval_scalar(expr: ir.Expression, row: tuple,
                input_schema: tuple[ir.DataType, ...]):
    """Evaluate a scalar expression against one row (tuple of runtime
    values). The expression must already type-check."""
    if expr.expr == "col":
        return row[expr.ordinal]
    if expr.expr == "lit":
        return runtime_literal(expr.dtype, expr.value)
    fn = expr.fn
    if fn in ("and", "or"):
        a = eval_scalar(expr.args[0], row, input_schema)
        b = eval_scalar(expr.args[1], row, input_schema)
        if fn == "and":
            if a is False or b is False:
                return False
            if a is None or b is None:
                return None
            return True
        if a is True or b is True:
            return True
        if a is None or b is None:
            return None
        return False
    if fn == "not":
        v = eval_scalar(expr.args[0], row, input_schema)
        return None if v is None else not v
    if fn in ir.COMPARISONS:
        return _compare(fn,
                        eval_scalar(expr.args[0], row, input_schema),
                        eval_scalar(expr.args[1], row, input_schema))
    if fn in ("add", "sub", "mul", "div"):
        arg_types = [ir.expr_type(a, input_schema) for a in expr.args]
        out_type = ir.type_of_call(fn, arg_types)
        return _arith(fn, out_type,
                      eval_scalar(expr.args[0], row, input_schema),
                      eval_scalar(expr.args[1], row, input_schema))
    if fn == "cast":
        src = ir.expr_type(expr.args[0], input_schema)
        return _cast(eval_scalar(expr.args[0], row, input_schema), src, expr.to)
    raise ValueError(f"not a scalar function: {fn}")


class Accumulator:
    """Streaming accumulator for one aggregate measure."""

    def __init__(self, fn: str, out_type: ir.DataType):
        self.fn = fn
        self.out_type = out_type
        self.count = 0
        self.total = None
        self.best = None

    def add(self, value) -> None:
        if self.fn == "count_star":
            self.count += 1
            return
        if value is None:
            return
        self.count += 1
        if self.fn in ("sum", "avg"):
            self.total = value if self.total is None else self.total + value
        elif self.fn == "min":
            self.best = value if self.best is None else min(self.best, value)
        elif self.fn == "max":
            self.best = value if self.best is None else max(self.best, value)

    def result(self):
        if self.fn in ("count", "count_star"):
            return self.count
        if self.fn == "sum":
            if self.total is None:
                return None
            if self.out_type.kind == "decimal":
                return _quantize(Decimal(self.total), self.out_type)
            return self.total
        if self.fn == "avg":
            if self.count == 0:
                return None
            return float(self.total) / self.count
        return self.best


def sort_key(value, descending: bool):
    """Total-order key: NULLs first ascending, last descending."""
    if value is None:
        return (0, 0) if not descending else (1, 0)
    return (1, value) if not descending else (0, _Neg(value))


class _Neg:
    """Reverses comparison order for heterogeneous sortable values."""

    __slots__ = ("v",)

    def __init__(self, v):
        self.v = v

    def __lt__(self, other):
        return other.v < self.v

    def __eq__(self, other):
        return other.v == self.v
