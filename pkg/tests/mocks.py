"""Oracles that wrap the real one to script, perturb or break its answers."""

from __future__ import annotations

import numpy as np

from qprefine.oracle import ActiveSetOracle, Basis, OracleResult, OracleStatus, VarStatus


class ScriptedOracle:
    """Returns canned results first, then defers to the real oracle."""

    def __init__(self, script, inner=None):
        self.script = list(script)
        self.inner = inner if inner is not None else ActiveSetOracle()
        self.calls = 0

    def solve(self, fqp, settings=None, warm=None):
        self.calls += 1
        if self.script:
            return self.script.pop(0)
        return self.inner.solve(fqp, settings, warm)


def canned(x, y, status, iterations=1):
    return OracleResult(OracleStatus.OPTIMAL, np.array(x, float), np.array(y, float), Basis(tuple(status)), iterations)


class PerturbedOracle:
    """Real answers with ``eps`` added to every basic primal entry and every multiplier."""

    def __init__(self, eps):
        self.eps = eps
        self.inner = ActiveSetOracle()
        self.calls = 0

    def solve(self, fqp, settings=None, warm=None):
        self.calls += 1
        res = self.inner.solve(fqp, settings, warm)
        if not res.ok:
            return res
        x = res.x.copy()
        basic = np.array([s == VarStatus.BASIC for s in res.basis.status], dtype=bool)
        x[basic] += self.eps
        return OracleResult(res.status, x, res.y + self.eps, res.basis, res.iterations)


class FlakyOracle:
    """Fails the calls whose 0-based index is in ``failing`` (or every call from ``fail_from`` on)."""

    def __init__(self, failing=(), fail_from=None, fail_fast_mode=False):
        self.failing = set(failing)
        self.fail_from = fail_from
        self.fail_fast_mode = fail_fast_mode
        self.inner = ActiveSetOracle()
        self.calls = 0

    def solve(self, fqp, settings=None, warm=None):
        i = self.calls
        self.calls += 1
        broken = i in self.failing or (self.fail_from is not None and i >= self.fail_from)
        if self.fail_fast_mode and settings is not None and settings.mode == "fast":
            broken = True
        if broken:
            n, m = fqp.n, fqp.m
            return OracleResult(OracleStatus.NUMERICAL_FAILURE, np.zeros(n), np.zeros(m), Basis((0,) * n), 0, "injected")
        return self.inner.solve(fqp, settings, warm)
