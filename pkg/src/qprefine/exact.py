"""Exact rational arithmetic: sparse rational matrices and LU factorization.

Every value here is a :class:`fractions.Fraction`; nothing in this module
touches floating point except the explicit conversions in :func:`to_rational`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

Rational = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


def to_rational(value) -> Fraction:
    """Convert ints, floats, Fractions and numeric strings to an exact Fraction.

    Floats are converted exactly (every finite double is a dyadic rational).
    Strings may be decimal/scientific literals (``"1.5e-3"``), Fortran-style
    ``D`` exponents, or ``"p/q"`` fractions.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not numeric data")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"cannot convert {value!r} to a rational")
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if "/" not in text:
            text = text.replace("D", "e").replace("d", "e")
        return Fraction(text)
    # numpy scalars and similar
    if hasattr(value, "item"):
        return to_rational(value.item())
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


def fraction_str(q: Fraction) -> str:
    """Render as ``"p/q"``; the denominator is always written."""
    return f"{q.numerator}/{q.denominator}"


def parse_fraction_str(text: str) -> Fraction:
    return to_rational(text)


def vector(values: Iterable) -> tuple[Fraction, ...]:
    return tuple(to_rational(v) for v in values)


def dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    return sum((x * y for x, y in zip(a, b) if x and y), ZERO)


def max_norm(v: Iterable[Fraction]) -> Fraction:
    return max((abs(x) for x in v), default=ZERO)


class RatMatrix:
    """Immutable sparse rational matrix stored as ``{(row, col): value}``.

    Explicit zeros are dropped on construction; duplicate coordinates in the
    input triplets are an error.
    """

    __slots__ = ("rows", "cols", "_entries", "_row_index", "_col_index", "symmetric")

    def __init__(
        self,
        rows: int,
        cols: int,
        entries: Mapping[tuple[int, int], Fraction] | None = None,
        symmetric: bool = False,
    ) -> None:
        if rows < 0 or cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        self.rows = rows
        self.cols = cols
        store: dict[tuple[int, int], Fraction] = {}
        for (i, j), v in (entries or {}).items():
            if not (0 <= i < rows and 0 <= j < cols):
                raise IndexError(f"entry ({i}, {j}) outside {rows}x{cols} matrix")
            v = to_rational(v)
            if v:
                store[(i, j)] = v
        if symmetric:
            if rows != cols:
                raise ValueError("a symmetric matrix must be square")
            for (i, j), v in store.items():
                if store.get((j, i), ZERO) != v:
                    raise ValueError(f"matrix is not symmetric at ({i}, {j})")
        self.symmetric = symmetric
        self._entries = store
        row_index: list[list[tuple[int, Fraction]]] = [[] for _ in range(rows)]
        col_index: list[list[tuple[int, Fraction]]] = [[] for _ in range(cols)]
        for (i, j), v in sorted(store.items()):
            row_index[i].append((j, v))
            col_index[j].append((i, v))
        self._row_index = row_index
        self._col_index = col_index

    @classmethod
    def from_triplets(
        cls,
        rows: int,
        cols: int,
        triplets: Iterable[tuple[int, int, object]],
        symmetric: bool = False,
    ) -> "RatMatrix":
        entries: dict[tuple[int, int], Fraction] = {}
        for i, j, v in triplets:
            if (i, j) in entries:
                raise ValueError(f"duplicate entry at ({i}, {j})")
            entries[(i, j)] = to_rational(v)
        return cls(rows, cols, entries, symmetric=symmetric)

    @classmethod
    def from_dense(cls, data: Sequence[Sequence[object]], symmetric: bool = False) -> "RatMatrix":
        rows = len(data)
        cols = len(data[0]) if rows else 0
        entries = {}
        for i, row in enumerate(data):
            if len(row) != cols:
                raise ValueError("ragged dense matrix")
            for j, v in enumerate(row):
                entries[(i, j)] = to_rational(v)
        return cls(rows, cols, entries, symmetric=symmetric)

    @classmethod
    def zeros(cls, rows: int, cols: int, symmetric: bool = False) -> "RatMatrix":
        return cls(rows, cols, {}, symmetric=symmetric)

    @classmethod
    def identity(cls, n: int) -> "RatMatrix":
        return cls(n, n, {(i, i): ONE for i in range(n)}, symmetric=True)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def nnz(self) -> int:
        return len(self._entries)

    def entry(self, i: int, j: int) -> Fraction:
        return self._entries.get((i, j), ZERO)

    def items(self) -> Iterator[tuple[tuple[int, int], Fraction]]:
        return iter(sorted(self._entries.items()))

    def triplets(self) -> list[tuple[int, int, Fraction]]:
        return [(i, j, v) for (i, j), v in sorted(self._entries.items())]

    def row(self, i: int) -> list[tuple[int, Fraction]]:
        return self._row_index[i]

    def column(self, j: int) -> list[tuple[int, Fraction]]:
        return self._col_index[j]

    def dense(self) -> list[list[Fraction]]:
        out = [[ZERO] * self.cols for _ in range(self.rows)]
        for (i, j), v in self._entries.items():
            out[i][j] = v
        return out

    def to_float_array(self):
        import numpy as np

        out = np.zeros((self.rows, self.cols))
        for (i, j), v in self._entries.items():
            out[i, j] = float(v)
        return out

    def matvec(self, x: Sequence[Fraction]) -> list[Fraction]:
        if len(x) != self.cols:
            raise ValueError(f"dimension mismatch: matrix has {self.cols} columns, vector {len(x)}")
        out = []
        for row in self._row_index:
            acc = ZERO
            for j, v in row:
                xj = x[j]
                if xj:
                    acc += v * xj
            out.append(acc)
        return out

    def rmatvec(self, y: Sequence[Fraction]) -> list[Fraction]:
        """Return ``A^T y``."""
        if len(y) != self.rows:
            raise ValueError(f"dimension mismatch: matrix has {self.rows} rows, vector {len(y)}")
        out = []
        for col in self._col_index:
            acc = ZERO
            for i, v in col:
                yi = y[i]
                if yi:
                    acc += v * yi
            out.append(acc)
        return out

    def transpose(self) -> "RatMatrix":
        return RatMatrix(
            self.cols,
            self.rows,
            {(j, i): v for (i, j), v in self._entries.items()},
            symmetric=self.symmetric,
        )

    def scaled(self, factor: Fraction) -> "RatMatrix":
        factor = to_rational(factor)
        return RatMatrix(
            self.rows,
            self.cols,
            {k: v * factor for k, v in self._entries.items()},
            symmetric=self.symmetric,
        )

    def hstack(self, other: "RatMatrix") -> "RatMatrix":
        if other.rows != self.rows:
            raise ValueError("row counts differ")
        entries = dict(self._entries)
        entries.update({(i, j + self.cols): v for (i, j), v in other._entries.items()})
        return RatMatrix(self.rows, self.cols + other.cols, entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RatMatrix):
            return NotImplemented
        return self.shape == other.shape and self._entries == other._entries

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, frozenset(self._entries.items())))

    def __repr__(self) -> str:
        return f"RatMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def matmul_dense(a: Sequence[Sequence[Fraction]], b: Sequence[Sequence[Fraction]]) -> list[list[Fraction]]:
    n, k = len(a), len(b)
    m = len(b[0]) if k else 0
    out = [[ZERO] * m for _ in range(n)]
    for i in range(n):
        ai = a[i]
        oi = out[i]
        for t in range(k):
            ait = ai[t]
            if not ait:
                continue
            bt = b[t]
            for j in range(m):
                if bt[j]:
                    oi[j] += ait * bt[j]
    return out


@dataclass(frozen=True)
class RatLU:
    """``P M = L U`` with ``perm[i]`` the source row of row ``i`` of ``P M``."""

    perm: tuple[int, ...]
    lower: tuple[tuple[Fraction, ...], ...]
    upper: tuple[tuple[Fraction, ...], ...]
    rank_ok: bool

    @property
    def n(self) -> int:
        return len(self.perm)

    def permuted(self, m: Sequence[Sequence[Fraction]]) -> list[list[Fraction]]:
        return [list(m[p]) for p in self.perm]


def _pivot_cost(q: Fraction) -> int:
    return q.numerator.bit_length() + q.denominator.bit_length()


def lu_factor(m: RatMatrix | Sequence[Sequence[object]]) -> RatLU:
    """Exact LU factorization with partial pivoting.

    Among the nonzero candidates in the pivot column the entry with the
    smallest combined numerator/denominator bit length is chosen, which keeps
    coefficient growth down. A column with no nonzero candidate leaves a zero
    on the diagonal of ``U`` and sets ``rank_ok`` to False; the factorization
    identity still holds.
    """
    if isinstance(m, RatMatrix):
        if m.rows != m.cols:
            raise ValueError(f"lu_factor needs a square matrix, got {m.rows}x{m.cols}")
        work = m.dense()
    else:
        work = [[to_rational(v) for v in row] for row in m]
        if any(len(row) != len(work) for row in work):
            raise ValueError("lu_factor needs a square matrix")
    n = len(work)
    perm = list(range(n))
    lower = [[ZERO] * n for _ in range(n)]
    rank_ok = True
    for k in range(n):
        best = None
        best_cost = None
        for i in range(k, n):
            v = work[i][k]
            if v:
                cost = _pivot_cost(v)
                if best is None or cost < best_cost:
                    best, best_cost = i, cost
        if best is None:
            rank_ok = False
            continue
        if best != k:
            work[k], work[best] = work[best], work[k]
            perm[k], perm[best] = perm[best], perm[k]
            lower[k], lower[best] = lower[best], lower[k]
        pivot_row = work[k]
        pivot = pivot_row[k]
        nz_cols = [j for j in range(k + 1, n) if pivot_row[j]]
        for i in range(k + 1, n):
            row = work[i]
            if not row[k]:
                continue
            factor = row[k] / pivot
            lower[i][k] = factor
            row[k] = ZERO
            for j in nz_cols:
                row[j] -= factor * pivot_row[j]
    for i in range(n):
        lower[i][i] = ONE
    upper = tuple(tuple(row[j] if j >= i else ZERO for j in range(n)) for i, row in enumerate(work))
    return RatLU(tuple(perm), tuple(tuple(r) for r in lower), upper, rank_ok)


def lu_solve(f: RatLU, rhs: Sequence[object]) -> list[Fraction]:
    """Solve ``M x = rhs`` from a factorization of ``M``."""
    n = f.n
    if len(rhs) != n:
        raise ValueError(f"dimension mismatch: system has {n} rows, rhs {len(rhs)}")
    if not f.rank_ok:
        raise ZeroDivisionError("cannot solve with a singular factorization")
    b = [to_rational(rhs[p]) for p in f.perm]
    y = [ZERO] * n
    for i in range(n):
        acc = b[i]
        row = f.lower[i]
        for j in range(i):
            if row[j] and y[j]:
                acc -= row[j] * y[j]
        y[i] = acc
    x = [ZERO] * n
    for i in range(n - 1, -1, -1):
        acc = y[i]
        row = f.upper[i]
        for j in range(i + 1, n):
            if row[j] and x[j]:
                acc -= row[j] * x[j]
        x[i] = acc / row[i]
    return x
