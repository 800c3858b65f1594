"""Seeded random QP instances with small exact coefficients."""

from __future__ import annotations

import random
from fractions import Fraction

from .exact import RatMatrix
from .model import INF, GeneralQP


def _small(rng: random.Random, scale: int = 10, denom: int = 4) -> Fraction:
    return Fraction(rng.randint(-scale * denom, scale * denom), rng.choice([1, 2, denom]))


def random_qp(
    seed: int,
    n: int = 5,
    m: int = 2,
    *,
    density: float = 0.6,
    strictly_convex: bool = True,
    feasible: bool = True,
    name: str | None = None,
) -> GeneralQP:
    """Random convex QP ``min 1/2 x'Qx + c'x`` with mixed row and column bounds.

    ``Q = L L' (+ I when strictly convex)`` from an integer ``L``, so convexity
    holds exactly. With ``feasible`` every constraint is built around a hidden
    point that satisfies it.
    """
    rng = random.Random(seed)
    L = [[Fraction(rng.randint(-3, 3)) if rng.random() < density else Fraction(0) for _ in range(n)] for _ in range(n)]
    Q = {}
    for i in range(n):
        for j in range(n):
            v = sum(L[i][k] * L[j][k] for k in range(n))
            if i == j and strictly_convex:
                v += 1
            if v:
                Q[(i, j)] = v
    c = [_small(rng) for _ in range(n)]
    point = [Fraction(rng.randint(-4, 4)) for _ in range(n)]

    col_lower, col_upper = [], []
    for j in range(n):
        kind = rng.choices(["box", "lower", "upper", "free", "fixed"], weights=[4, 3, 2, 2, 1])[0]
        lo = point[j] - rng.randint(0, 3) if feasible else Fraction(rng.randint(-5, 0))
        up = point[j] + rng.randint(0, 3) if feasible else Fraction(rng.randint(0, 5))
        if kind == "box":
            col_lower.append(lo)
            col_upper.append(up)
        elif kind == "lower":
            col_lower.append(lo)
            col_upper.append(INF)
        elif kind == "upper":
            col_lower.append(-INF)
            col_upper.append(up)
        elif kind == "fixed":
            col_lower.append(point[j])
            col_upper.append(point[j])
        else:
            col_lower.append(-INF)
            col_upper.append(INF)

    A = {}
    row_lower, row_upper = [], []
    for i in range(m):
        for j in range(n):
            if rng.random() < density:
                A[(i, j)] = Fraction(rng.randint(-5, 5))
        if not any(A.get((i, j)) for j in range(n)):
            A[(i, rng.randrange(n))] = Fraction(rng.choice([-2, -1, 1, 2]))
        activity = sum(A.get((i, j), 0) * point[j] for j in range(n))
        kind = rng.choice(["eq", "le", "ge", "range"])
        slack = Fraction(rng.randint(0, 4), rng.choice([1, 2]))
        if kind == "eq":
            row_lower.append(activity)
            row_upper.append(activity)
        elif kind == "le":
            row_lower.append(-INF)
            row_upper.append(activity + slack)
        elif kind == "ge":
            row_lower.append(activity - slack)
            row_upper.append(INF)
        else:
            row_lower.append(activity - slack)
            row_upper.append(activity + slack + 1)
    return GeneralQP(
        Q=RatMatrix(n, n, Q, symmetric=True),
        c=tuple(c),
        A=RatMatrix(m, n, A),
        row_lower=tuple(row_lower),
        row_upper=tuple(row_upper),
        col_lower=tuple(col_lower),
        col_upper=tuple(col_upper),
        name=name or f"RAND{seed}",
    )
