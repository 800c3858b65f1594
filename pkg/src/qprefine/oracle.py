"""Floating-point QP oracle: a dense primal active-set method.

Solves ``min 1/2 x'Qx + c'x`` s.t. ``A x = b``, ``l <= x <= u`` in double
precision and reports the final working set as a :class:`Basis`. The
refinement driver only relies on the :class:`QPOracle` protocol, so any other
solver returning an approximate primal-dual pair and a basis can stand in.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .model import FloatQP


class VarStatus(enum.IntEnum):
    BASIC = 0
    AT_LOWER = 1
    AT_UPPER = 2


@dataclass(frozen=True)
class Basis:
    status: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "status", tuple(VarStatus(s) for s in self.status))

    def __len__(self) -> int:
        return len(self.status)

    @property
    def basic(self) -> list[int]:
        return [i for i, s in enumerate(self.status) if s == VarStatus.BASIC]

    def check(self, l, u) -> None:
        """Raise ValueError unless every bound status refers to a finite bound."""
        if len(self.status) != len(l):
            raise ValueError(f"basis has {len(self.status)} entries, problem has {len(l)} variables")
        for i, s in enumerate(self.status):
            if s == VarStatus.AT_LOWER and l[i] == -np.inf:
                raise ValueError(f"variable {i} at_lower but has no finite lower bound")
            if s == VarStatus.AT_UPPER and u[i] == np.inf:
                raise ValueError(f"variable {i} at_upper but has no finite upper bound")

    def to_list(self) -> list[str]:
        return [s.name.lower() for s in self.status]


class OracleStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class OracleSettings:
    termination_tolerance: float = 1.1105e-9
    max_iterations: int = 5000
    refinement_steps_internal: int = 10
    mode: str = "reliable"

    @classmethod
    def fast(cls, **overrides) -> "OracleSettings":
        return cls(**{"termination_tolerance": 1e-3, "refinement_steps_internal": 0, "mode": "fast", **overrides})

    @classmethod
    def reliable(cls, **overrides) -> "OracleSettings":
        return cls(**{"termination_tolerance": 1.1105e-9, "refinement_steps_internal": 10, "mode": "reliable", **overrides})


@dataclass
class OracleResult:
    status: OracleStatus
    x: np.ndarray
    y: np.ndarray
    basis: Basis
    iterations: int
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OracleStatus.OPTIMAL


class QPOracle(Protocol):
    def solve(self, fqp: FloatQP, settings: OracleSettings, warm: Optional[Basis] = None) -> OracleResult:
        ...


_BASIC, _LOWER, _UPPER = int(VarStatus.BASIC), int(VarStatus.AT_LOWER), int(VarStatus.AT_UPPER)
_EPS = np.finfo(float).eps


class _Failure(Exception):
    pass


def _null_space(M: np.ndarray) -> np.ndarray:
    rows, cols = M.shape
    if cols == 0:
        return np.zeros((0, 0))
    if rows == 0:
        return np.eye(cols)
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(cols)
    rank = int(np.sum(s > max(rows, cols) * _EPS * s[0]))
    return vt[rank:].T


def _rank(M: np.ndarray) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > max(M.shape) * _EPS * s[0]))


class _Engine:
    """Primal active-set iterations on a fixed problem, starting from a feasible point."""

    def __init__(self, H, g0, A, b, l, u, fixed, tol, max_iter):
        self.H, self.g0, self.A, self.b, self.l, self.u = H, g0, A, b, l, u
        self.fixed = fixed
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0

    def complete_rank(self, status: np.ndarray) -> None:
        """Release nonbasic variables until the basic columns span the row space of A."""
        A = self.A
        if A.shape[0] == 0:
            return
        target = _rank(A)
        F = list(np.flatnonzero(status == _BASIC))
        current = _rank(A[:, F]) if F else 0
        for pass_fixed in (False, True):
            for j in range(len(status)):
                if current >= target:
                    return
                if status[j] == _BASIC or bool(self.fixed[j]) != pass_fixed:
                    continue
                trial = _rank(A[:, F + [j]])
                if trial > current:
                    F.append(j)
                    status[j] = _BASIC
                    current = trial

    def multipliers(self, x, status):
        F = np.flatnonzero(status == _BASIC)
        g = self.H @ x + self.g0
        m = self.A.shape[0]
        if m == 0:
            return np.zeros(0), g
        if F.size:
            y = np.linalg.lstsq(self.A[:, F].T, g[F], rcond=None)[0]
        else:
            y = np.linalg.lstsq(self.A.T, g, rcond=None)[0]
        return y, g - self.A.T @ y

    def run(self, x: np.ndarray, status: np.ndarray):
        H, A, l, u = self.H, self.A, self.l, self.u
        n = len(x)
        while True:
            if self.iterations >= self.max_iter:
                return OracleStatus.ITERATION_LIMIT
            self.iterations += 1
            F = np.flatnonzero(status == _BASIC)
            g = H @ x + self.g0
            if not np.all(np.isfinite(g)):
                raise _Failure("non-finite gradient")
            p = np.zeros(n)
            newton = True
            if F.size:
                Z = _null_space(A[:, F])
                if Z.shape[1]:
                    gF = g[F]
                    rz = Z.T @ gF
                    Hz = Z.T @ H[np.ix_(F, F)] @ Z
                    w, V = np.linalg.eigh((Hz + Hz.T) / 2)
                    wscale = max(1.0, float(np.max(np.abs(w))) if w.size else 0.0)
                    pos = w > 1e-11 * wscale
                    V0 = V[:, ~pos]
                    r0 = V0 @ (V0.T @ rz)
                    gscale = max(1.0, float(np.max(np.abs(gF))))
                    if np.max(np.abs(r0), initial=0.0) > 1e-12 * gscale:
                        pz = -r0
                        newton = False
                    else:
                        Vp = V[:, pos]
                        pz = -Vp @ ((Vp.T @ rz) / w[pos])
                    p[F] = Z @ pz
            xscale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
            if np.max(np.abs(p)) > 1e-14 * xscale:
                step, block, at = self._ratio_test(x, p, F, newton)
                if step == np.inf:
                    raise _Failure("unbounded direction of zero curvature")
                x += step * p
                if block >= 0:
                    x[block] = l[block] if at == _LOWER else u[block]
                    status[block] = at
                continue
            y, z = self.multipliers(x, status)
            j, worst = -1, self.tol
            for i in range(n):
                if self.fixed[i]:
                    continue
                if status[i] == _LOWER:
                    v = -z[i]
                elif status[i] == _UPPER:
                    v = z[i]
                else:
                    continue
                if v > worst:
                    j, worst = i, v
            if j < 0:
                return OracleStatus.OPTIMAL
            status[j] = _BASIC

    def _ratio_test(self, x, p, F, newton):
        l, u = self.l, self.u
        best = 1.0 if newton else np.inf
        block, at = -1, _BASIC
        pscale = float(np.max(np.abs(p)))
        for i in F:
            pi = p[i]
            if pi < -1e-15 * pscale and l[i] > -np.inf:
                t = max((l[i] - x[i]) / pi, 0.0)
                side = _LOWER
            elif pi > 1e-15 * pscale and u[i] < np.inf:
                t = max((u[i] - x[i]) / pi, 0.0)
                side = _UPPER
            else:
                continue
            # strict comparison keeps the smallest index among ties; a bound hit
            # exactly by the full Newton step still enters the working set
            if t < best or (newton and block < 0 and t == best):
                best, block, at = t, i, side
        return best, block, at


class ActiveSetOracle:
    """Dense primal active-set QP solver with warm starts from a previous basis.

    An instance is single-threaded and keeps the most recent optimal basis in
    ``last_basis``; run independent instances for concurrent solves.
    """

    def __init__(self, settings: OracleSettings | None = None) -> None:
        self.settings = settings or OracleSettings.reliable()
        self.last_basis: Basis | None = None

    def solve(self, fqp: FloatQP, settings: OracleSettings | None = None, warm: Basis | None = None) -> OracleResult:
        settings = settings or self.settings
        n, m = fqp.n, fqp.m
        if fqp.Q.shape != (n, n) or fqp.b.shape != (m,) or fqp.c.shape != (n,):
            raise ValueError("inconsistent FloatQP dimensions")
        if warm is not None and len(warm) != n:
            raise ValueError(f"warm basis has {len(warm)} entries, problem has {n} variables")
        l, u = fqp.l, fqp.u
        fixed = l == u
        engine = _Engine(fqp.Q, fqp.c, fqp.A, fqp.b, l, u, fixed, settings.termination_tolerance, settings.max_iterations)
        try:
            x, status = self._start(fqp, warm, fixed, engine)
            if not self._phase_one(fqp, x, status, settings, engine):
                return self._result(OracleStatus.NUMERICAL_FAILURE, x, np.zeros(m), status, engine, "phase one failed")
            engine.complete_rank(status)
            outcome = engine.run(x, status)
            if outcome != OracleStatus.OPTIMAL:
                return self._result(outcome, x, np.zeros(m), status, engine, "iteration limit")
            y, _ = engine.multipliers(x, status)
            x, y = self._polish(fqp, x, y, status, settings.refinement_steps_internal)
            if not self._kkt_ok(fqp, x, y, status, settings.termination_tolerance):
                return self._result(OracleStatus.NUMERICAL_FAILURE, x, y, status, engine, "final KKT check failed")
        except (_Failure, np.linalg.LinAlgError, FloatingPointError) as exc:
            return self._result(OracleStatus.NUMERICAL_FAILURE, np.zeros(n), np.zeros(m), np.zeros(n, dtype=int), engine, str(exc))
        result = self._result(OracleStatus.OPTIMAL, x, y, status, engine)
        self.last_basis = result.basis
        return result

    @staticmethod
    def _result(code, x, y, status, engine, message=""):
        return OracleResult(code, np.array(x, dtype=float), np.array(y, dtype=float), Basis(tuple(int(s) for s in status)), engine.iterations, message)

    def _start(self, fqp: FloatQP, warm: Basis | None, fixed, engine: _Engine):
        l, u = fqp.l, fqp.u
        n = fqp.n
        x = np.clip(np.zeros(n), l, u)
        status = np.full(n, _BASIC, dtype=int)
        for i in range(n):
            if fixed[i] or x[i] == l[i]:
                status[i] = _LOWER
            elif x[i] == u[i]:
                status[i] = _UPPER
        if warm is None:
            return x, status
        for i, s in enumerate(warm.status):
            if fixed[i]:
                continue
            if s == VarStatus.AT_LOWER and l[i] > -np.inf:
                status[i], x[i] = _LOWER, l[i]
            elif s == VarStatus.AT_UPPER and u[i] < np.inf:
                status[i], x[i] = _UPPER, u[i]
            else:
                status[i] = _BASIC
        engine.complete_rank(status)
        F = np.flatnonzero(status == _BASIC)
        if F.size:
            xF = self._basis_point(fqp, x, status)
            if np.all(np.isfinite(xF)):
                lo, hi = l[F], u[F]
                clipped = np.clip(xF, lo, hi)
                x[F] = clipped
                for k, i in enumerate(F):
                    if xF[k] < lo[k]:
                        status[i] = _LOWER
                    elif xF[k] > hi[k]:
                        status[i] = _UPPER
        return x, status

    @staticmethod
    def _basis_point(fqp: FloatQP, x, status):
        """Solve the equality-constrained QP in the basic variables with the rest held at x."""
        F = np.flatnonzero(status == _BASIC)
        N = np.flatnonzero(status != _BASIC)
        Q, A = fqp.Q, fqp.A
        m = fqp.m
        k = F.size
        K = np.zeros((k + m, k + m))
        K[:k, :k] = Q[np.ix_(F, F)]
        K[:k, k:] = A[:, F].T
        K[k:, :k] = A[:, F]
        rhs = np.concatenate([-fqp.c[F] - Q[np.ix_(F, N)] @ x[N], fqp.b - A[:, N] @ x[N]])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        return sol[:k]

    def _phase_one(self, fqp: FloatQP, x, status, settings: OracleSettings, engine: _Engine) -> bool:
        """Drive ``A x = b`` with one nonnegative artificial per row, minimizing their sum."""
        m, n = fqp.m, fqp.n
        if m == 0:
            return True
        r = fqp.b - fqp.A @ x
        scale = max(1.0, float(np.max(np.abs(fqp.b))), float(np.max(np.abs(fqp.A @ x))))
        if np.max(np.abs(r)) <= 1e-14 * scale:
            return True
        sign = np.where(r >= 0, 1.0, -1.0)
        A1 = np.hstack([fqp.A, np.diag(sign)])
        l1 = np.concatenate([fqp.l, np.zeros(m)])
        u1 = np.concatenate([fqp.u, np.full(m, np.inf)])
        g1 = np.concatenate([np.zeros(n), np.ones(m)])
        x1 = np.concatenate([x, np.abs(r)])
        s1 = np.concatenate([status, np.full(m, _BASIC, dtype=int)])
        fixed1 = np.concatenate([engine.fixed, np.zeros(m, dtype=bool)])
        sub = _Engine(np.zeros((n + m, n + m)), g1, A1, fqp.b, l1, u1, fixed1, 1e-9, settings.max_iterations)
        outcome = sub.run(x1, s1)
        engine.iterations += sub.iterations
        if outcome != OracleStatus.OPTIMAL:
            return False
        x[:] = x1[:n]
        status[:] = s1[:n]
        infeas = float(np.max(np.abs(fqp.b - fqp.A @ x)))
        return infeas <= max(settings.termination_tolerance, 1e-9) * scale

    @staticmethod
    def _polish(fqp: FloatQP, x, y, status, steps: int):
        """Correct (x_F, y) against the basis KKT system, residuals in extended precision."""
        if steps <= 0:
            return x, y
        F = np.flatnonzero(status == _BASIC)
        k, m = F.size, fqp.m
        if k + m == 0:
            return x, y
        Q, A = fqp.Q, fqp.A
        K = np.zeros((k + m, k + m))
        K[:k, :k] = Q[np.ix_(F, F)]
        K[:k, k:] = -A[:, F].T
        K[k:, :k] = A[:, F]
        Ql, Al = Q.astype(np.longdouble), A.astype(np.longdouble)
        cl, bl = fqp.c.astype(np.longdouble), fqp.b.astype(np.longdouble)
        x, y = x.copy(), y.copy()
        best = None
        for _ in range(steps):
            xl, yl = x.astype(np.longdouble), y.astype(np.longdouble)
            rd = -(Ql @ xl + cl - Al.T @ yl)[F]
            rp = bl - Al @ xl
            res = np.concatenate([rd, rp]).astype(float)
            size = float(np.max(np.abs(res), initial=0.0))
            if best is not None and size >= best:
                break
            best = size
            if size == 0.0:
                break
            d = np.linalg.lstsq(K, res, rcond=None)[0]
            x[F] += d[:k]
            y += d[k:]
        return x, y

    @staticmethod
    def _kkt_ok(fqp: FloatQP, x, y, status, tol: float) -> bool:
        l, u = fqp.l, fqp.u
        primal = np.max(np.abs(fqp.A @ x - fqp.b), initial=0.0)
        with np.errstate(invalid="ignore"):
            primal = max(primal, np.max(np.where(l > -np.inf, l - x, 0.0), initial=0.0))
            primal = max(primal, np.max(np.where(u < np.inf, x - u, 0.0), initial=0.0))
        if not np.isfinite(primal) or primal > tol:
            return False
        z = fqp.Q @ x + fqp.c - fqp.A.T @ y
        fixed = l == u
        for i, s in enumerate(status):
            if fixed[i]:
                continue
            if s == _LOWER and z[i] < -tol:
                return False
            if s == _UPPER and z[i] > tol:
                return False
            if s == _BASIC and abs(z[i]) > tol:
                return False
        return True
