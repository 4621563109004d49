"""Dense two-phase simplex solver for small linear programs.

Kept deliberately small and deterministic: Bland's rule for both the
entering and the leaving variable, so the method cannot cycle.  Problem
sizes in this package are tiny (tens of variables), so a dense tableau
is the right tool.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SimplexError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str
    value: float | None
    x: np.ndarray | None


def _pivot(T: np.ndarray, basis: list[int], row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and abs(T[i, col]) > 0.0:
            T[i] -= T[i, col] * T[row]
    basis[row] = col


def _run_phase(T: np.ndarray, basis: list[int], n_cols: int, tol: float) -> str:
    """Iterate Bland pivots on the last row of T until optimal or unbounded."""
    max_iters = 50 * (T.shape[0] + n_cols) + 1000
    for _ in range(max_iters):
        obj = T[-1, :n_cols]
        enter = -1
        for j in range(n_cols):
            if obj[j] < -tol:
                enter = j
                break
        if enter < 0:
            return OPTIMAL
        ratios = []
        for i in range(T.shape[0] - 1):
            a = T[i, enter]
            if a > tol:
                ratios.append((T[i, -1] / a, basis[i], i))
        if not ratios:
            return UNBOUNDED
        # min ratio, ties broken by smallest basis index (Bland)
        ratios.sort(key=lambda r: (r[0], r[1]))
        _pivot(T, basis, ratios[0][2], enter)
    raise SimplexError("pivot limit exceeded")


def simplex_solve(A: np.ndarray, b: np.ndarray, c: np.ndarray, tol: float = PIVOT_TOL) -> LPResult:
    """Solve min c@x subject to A@x = b, x >= 0.

    Returns an LPResult with status "optimal", "infeasible" or "unbounded".
    The reported optimum is accurate to roughly `tol` on well-scaled data.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = A.shape if A.ndim == 2 else (0, len(c))
    if m == 0:
        x = np.zeros(n)
        if np.any(c < -tol):
            return LPResult(UNBOUNDED, None, None)
        return LPResult(OPTIMAL, 0.0, x)
    A = A.copy()
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # Tableau: columns = [original | artificial | rhs]; rows = constraints,
    # then the real objective, then the phase-1 objective.
    T = np.zeros((m + 2, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = c
    T[m + 1, n:n + m] = 1.0
    # price out the artificial basis from the phase-1 row
    T[m + 1, :] -= T[:m, :].sum(axis=0)
    basis = list(range(n, n + m))

    status = _run_phase_two_rows(T, basis, n + m, tol)
    if status != OPTIMAL:
        raise SimplexError("phase 1 cannot be unbounded")
    if T[-1, -1] < -1e-7:
        return LPResult(INFEASIBLE, None, None)

    # drive leftover artificial variables out of the basis
    for i in range(m):
        if basis[i] >= n:
            pivot_col = -1
            for j in range(n):
                if abs(T[i, j]) > tol:
                    pivot_col = j
                    break
            if pivot_col >= 0:
                _pivot(T, basis, i, pivot_col)
    keep = [i for i in range(m) if basis[i] < n or abs(T[i, -1]) <= 1e-7]
    rows = [T[i] for i in keep] + [T[m]]
    basis = [basis[i] for i in keep]
    T2 = np.array(rows)
    T2 = np.delete(T2, np.s_[n:n + m], axis=1)
    status = _run_phase(T2, basis, n, tol)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, None, None)
    x = np.zeros(n)
    for i, bi in enumerate(basis):
        if bi < n:
            x[bi] = T2[i, -1]
    return LPResult(OPTIMAL, float(c @ x), x)


def _run_phase_two_rows(T: np.ndarray, basis: list[int], n_cols: int, tol: float) -> str:
    """Phase 1 driver that keeps the real objective row priced alongside.

    Layout of T: m constraint rows, the real objective row, the phase-1
    objective row (used for pivoting).
    """
    m = T.shape[0] - 2
    max_iters = 50 * (m + n_cols) + 1000
    for _ in range(max_iters):
        obj = T[-1, :n_cols]
        enter = -1
        for j in range(n_cols):
            if obj[j] < -tol:
                enter = j
                break
        if enter < 0:
            return OPTIMAL
        ratios = []
        for i in range(m):
            a = T[i, enter]
            if a > tol:
                ratios.append((T[i, -1] / a, basis[i], i))
        if not ratios:
            return UNBOUNDED
        ratios.sort(key=lambda r: (r[0], r[1]))
        row = ratios[0][2]
        T[row] /= T[row, enter]
        for i in range(T.shape[0]):
            if i != row and abs(T[i, enter]) > 0.0:
                T[i] -= T[i, enter] * T[row]
        basis[row] = enter
    raise SimplexError("pivot limit exceeded")


LE = "<="
GE = ">="
EQ = "=="


class LPBuilder:
    """Small modelling layer: free/nonnegative variables and <=, >=, == rows.

    Lowered to standard form for `simplex_solve`; `solve` maps the optimum
    back to the modelled variables.
    """

    def __init__(self) -> None:
        self._kinds: list[str] = []
        self._obj: list[float] = []
        self._rows: list[tuple[dict[int, float], str, float]] = []

    def add_var(self, kind: str = "nonneg", obj: float = 0.0) -> int:
        if kind not in ("nonneg", "free"):
            raise ValueError(f"unknown variable kind {kind!r}")
        self._kinds.append(kind)
        self._obj.append(float(obj))
        return len(self._kinds) - 1

    def add_constraint(self, coeffs: dict[int, float], sense: str, rhs: float) -> None:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"unknown sense {sense!r}")
        self._rows.append((dict(coeffs), sense, float(rhs)))

    def solve(self, tol: float = PIVOT_TOL) -> LPResult:
        n_model = len(self._kinds)
        col_of: list[tuple[int, int | None]] = []
        n_std = 0
        for kind in self._kinds:
            if kind == "nonneg":
                col_of.append((n_std, None))
                n_std += 1
            else:
                col_of.append((n_std, n_std + 1))
                n_std += 2
        m = len(self._rows)
        n_slack = sum(1 for _, s, _ in self._rows if s != EQ)
        A = np.zeros((m, n_std + n_slack))
        b = np.zeros(m)
        c = np.zeros(n_std + n_slack)
        for j, (pos, neg) in enumerate(col_of):
            c[pos] = self._obj[j]
            if neg is not None:
                c[neg] = -self._obj[j]
        slack = n_std
        for i, (coeffs, sense, rhs) in enumerate(self._rows):
            for j, val in coeffs.items():
                pos, neg = col_of[j]
                A[i, pos] += val
                if neg is not None:
                    A[i, neg] -= val
            b[i] = rhs
            if sense == LE:
                A[i, slack] = 1.0
                slack += 1
            elif sense == GE:
                A[i, slack] = -1.0
                slack += 1
        res = simplex_solve(A, b, c, tol=tol)
        if res.status != OPTIMAL:
            return LPResult(res.status, None, None)
        x = np.zeros(n_model)
        for j, (pos, neg) in enumerate(col_of):
            x[j] = res.x[pos] - (res.x[neg] if neg is not None else 0.0)
        value = float(np.dot(self._obj, x))
        return LPResult(OPTIMAL, value, x)
