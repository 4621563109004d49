"""Norm expression trees and the numeric solvers they require.

A NormExpr describes a norm (or seminorm) on R^d built from weighted
lp leaves and six combinators: max and sum aggregation over coordinate
blocks, quotient by a subspace, dual, operator norm on flattened
matrices, and precomposition with an injective linear map.  The family
is closed under every construction performed elsewhere in the package.

Three numeric problems are solved here:

* eval_norm      -- evaluate an expression at a vector,
* dist_to_subspace -- infimum of the norm over a coset (quotient norms),
* op_norm        -- the induced norm of a matrix between two expressions.

Exact routes (closed forms, least squares, the bundled simplex solver,
extreme-point enumeration, power iteration) are used whenever the
structure permits; otherwise a cutting-plane method driven by
subgradients (for distances) or a projected ascent heuristic (for
operator norms) takes over, and results carry an exactness flag.
"""
from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .simplex import EQ, GE, LE, OPTIMAL, LPBuilder

INF = math.inf
DEFAULT_TOL = 1e-8
ENUM_CAP = 16
_RANK_TOL = 1e-10


class NormError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message: str, best_bound: float | None = None):
        super().__init__(message)
        self.best_bound = best_bound


def _ro(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


def _as_vec(v, dim: int, what: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (dim,):
        raise NormError(f"{what} has shape {v.shape}, expected ({dim},)")
    return v


# ---------------------------------------------------------------------------
# expression tree


@dataclass(frozen=True, eq=False)
class NormExpr:
    @property
    def dim(self) -> int:
        raise NotImplementedError

    @cached_property
    def key(self) -> bytes:
        return hashlib.sha256(self._fingerprint()).digest()

    def _fingerprint(self) -> bytes:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Lp(NormExpr):
    """Weighted lp norm |v| = ||w * v||_p with p in {1, 2, inf}.

    Zero weights are allowed and make this a seminorm; the rest of the
    package only feeds genuine norms into module fibers except where a
    seminorm is the point (metric identification).
    """

    p: float
    weights: np.ndarray

    def __post_init__(self):
        if self.p not in (1, 2, INF):
            raise NormError(f"p must be 1, 2 or inf, got {self.p}")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise NormError("weights must be a 1-d array of finite nonnegative reals")
        object.__setattr__(self, "weights", _ro(w))

    @property
    def dim(self) -> int:
        return len(self.weights)

    def _fingerprint(self) -> bytes:
        return b"Lp|" + repr(float(self.p)).encode() + b"|" + self.weights.tobytes()


def lp(p: float, dim: int) -> Lp:
    """Unweighted lp leaf of the given dimension."""
    return Lp(p, np.ones(dim))


def _check_parts(parts) -> tuple[NormExpr, ...]:
    parts = tuple(parts)
    for part in parts:
        if not isinstance(part, NormExpr):
            raise NormError("parts must be NormExpr values")
    return parts


@dataclass(frozen=True, eq=False)
class SupOf(NormExpr):
    """Max of child norms over consecutive coordinate blocks (linf combination)."""

    parts: tuple[NormExpr, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", _check_parts(self.parts))

    @property
    def dim(self) -> int:
        return sum(part.dim for part in self.parts)

    def _fingerprint(self) -> bytes:
        return b"Sup|" + b"|".join(part.key for part in self.parts)


@dataclass(frozen=True, eq=False)
class SumOf(NormExpr):
    """Sum of child norms over consecutive coordinate blocks (l1 combination)."""

    parts: tuple[NormExpr, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", _check_parts(self.parts))

    @property
    def dim(self) -> int:
        return sum(part.dim for part in self.parts)

    def _fingerprint(self) -> bytes:
        return b"Sum|" + b"|".join(part.key for part in self.parts)


@dataclass(frozen=True, eq=False)
class QuotientOf(NormExpr):
    """|v| = inf over w in span(basis columns) of ambient(v + w)."""

    ambient: NormExpr
    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim != 2 or B.shape[0] != self.ambient.dim:
            raise NormError("basis must be (ambient dim) x k")
        if B.shape[1] > 0 and np.linalg.matrix_rank(B, tol=_RANK_TOL) < B.shape[1]:
            raise NormError("basis columns must be linearly independent")
        object.__setattr__(self, "basis", _ro(B))

    @property
    def dim(self) -> int:
        return self.ambient.dim

    def _fingerprint(self) -> bytes:
        return b"Quot|" + self.ambient.key + b"|" + self.basis.tobytes()


@dataclass(frozen=True, eq=False)
class DualOf(NormExpr):
    """Dual norm: |xi| = sup of <xi, v> over the unit ball of the inner norm."""

    inner: NormExpr

    @property
    def dim(self) -> int:
        return self.inner.dim

    def _fingerprint(self) -> bytes:
        return b"Dual|" + self.inner.key


@dataclass(frozen=True, eq=False)
class OpNormOf(NormExpr):
    """Operator norm on (tgt.dim x src.dim) matrices flattened row-major."""

    src: NormExpr
    tgt: NormExpr

    @property
    def dim(self) -> int:
        return self.src.dim * self.tgt.dim

    def _fingerprint(self) -> bytes:
        return b"Op|" + self.src.key + b"|" + self.tgt.key


@dataclass(frozen=True, eq=False)
class ComposeLinear(NormExpr):
    """|v| = inner(embed @ v) for an injective embed matrix."""

    embed: np.ndarray
    inner: NormExpr

    def __post_init__(self):
        E = np.asarray(self.embed, dtype=float)
        if E.ndim != 2 or E.shape[0] != self.inner.dim:
            raise NormError("embed must be (inner dim) x k")
        if E.shape[1] > 0 and np.linalg.matrix_rank(E, tol=_RANK_TOL) < E.shape[1]:
            raise NormError("embed must have full column rank")
        object.__setattr__(self, "embed", _ro(E))

    @property
    def dim(self) -> int:
        return self.embed.shape[1]

    def _fingerprint(self) -> bytes:
        return b"CL|" + self.embed.tobytes() + b"|" + self.inner.key


def part_slices(parts: tuple[NormExpr, ...]) -> list[slice]:
    out, start = [], 0
    for part in parts:
        out.append(slice(start, start + part.dim))
        start += part.dim
    return out


def dual_index(p: float) -> float:
    if p == 1:
        return INF
    if p == 2:
        return 2
    if p == INF:
        return 1
    raise NormError(f"p must be 1, 2 or inf, got {p}")


# ---------------------------------------------------------------------------
# linear algebra helpers


def _fix_signs(B: np.ndarray) -> np.ndarray:
    B = B.copy()
    for j in range(B.shape[1]):
        col = B[:, j]
        idx = int(np.argmax(np.abs(col)))
        if col[idx] < 0:
            B[:, j] = -col
    return B


def null_space(A: np.ndarray) -> np.ndarray:
    """Orthonormal basis (as columns) of the kernel of A, deterministic signs."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise NormError("matrix expected")
    m, d = A.shape
    if d == 0:
        return np.zeros((0, 0))
    if m == 0 or not np.any(A):
        return np.eye(d)
    _, s, vh = np.linalg.svd(A)
    cut = max(m, d) * np.finfo(float).eps * s[0]
    rank = int(np.sum(s > max(cut, _RANK_TOL * s[0])))
    return _fix_signs(vh[rank:].T.copy())


def column_space(A: np.ndarray) -> np.ndarray:
    """Orthonormal basis (as columns) of the column space of A."""
    A = np.asarray(A, dtype=float)
    m, d = A.shape
    if d == 0 or m == 0 or not np.any(A):
        return np.zeros((m, 0))
    u, s, _ = np.linalg.svd(A)
    cut = max(m, d) * np.finfo(float).eps * s[0]
    rank = int(np.sum(s > max(cut, _RANK_TOL * s[0])))
    return _fix_signs(u[:, :rank].copy())


def matrix_rank(A: np.ndarray) -> int:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    return int(np.linalg.matrix_rank(A, tol=max(A.shape) * np.finfo(float).eps * max(1.0, float(np.abs(A).max()))))


def complement_coords(S: np.ndarray) -> tuple[tuple[int, ...], np.ndarray, np.ndarray]:
    """Coordinates completing span(S) to the whole space.

    Returns (indices c, embedding E = I[:, c], projection P) where
    [E | S] is invertible and P is the top block of its inverse, so that
    w - E @ P @ w always lies in span(S).  The greedy scan over the
    canonical coordinate order makes the choice deterministic.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    Q = column_space(S)
    rank = Q.shape[1]
    chosen: list[int] = []
    Qcur = Q
    for j in range(n):
        if len(chosen) + rank == n:
            break
        e = np.zeros(n)
        e[j] = 1.0
        r = e - Qcur @ (Qcur.T @ e)
        nr = np.linalg.norm(r)
        if nr > 1e-9:
            chosen.append(j)
            Qcur = np.hstack([Qcur, (r / nr)[:, None]])
    if len(chosen) + rank != n:
        raise NormError("could not complete basis (ill conditioned subspace)")
    E = np.eye(n)[:, chosen]
    M = np.hstack([E, Q]) if rank else E
    Minv = np.linalg.inv(M) if n else np.zeros((0, 0))
    P = Minv[:len(chosen)] if n else np.zeros((0, 0))
    return tuple(chosen), E, P


# ---------------------------------------------------------------------------
# structural analysis


def l2_factor(n: NormExpr) -> np.ndarray | None:
    """Matrix R with n(v) = ||R v||_2, when the expression is l2-representable."""
    if isinstance(n, Lp):
        if n.p == 2 or n.dim <= 1:
            return np.diag(n.weights) if n.dim else np.zeros((0, 0))
        return None
    if isinstance(n, (SupOf, SumOf)) and len(n.parts) == 1:
        return l2_factor(n.parts[0])
    if isinstance(n, ComposeLinear):
        R = l2_factor(n.inner)
        return None if R is None else R @ n.embed
    if isinstance(n, QuotientOf):
        R = l2_factor(n.ambient)
        if R is None:
            return None
        Q = column_space(R @ n.basis)
        return R - Q @ (Q.T @ R)
    if isinstance(n, DualOf):
        R = l2_factor(n.inner)
        if R is None or R.shape[0] != R.shape[1]:
            return None
        if R.shape[0] and matrix_rank(R) < R.shape[0]:
            return None
        return np.linalg.inv(R).T if R.shape[0] else R
    return None


def polyhedral_flatten(n: NormExpr) -> tuple[str, np.ndarray] | None:
    """Flatten to a single weighted l1 or linf leaf when possible."""
    if isinstance(n, Lp):
        if n.p == 1 or n.dim <= 1:
            return "l1", np.asarray(n.weights)
        if n.p == INF:
            return "linf", np.asarray(n.weights)
        return None
    if isinstance(n, SumOf):
        flats = [polyhedral_flatten(p) for p in n.parts]
        if all(f is not None and f[0] == "l1" for f in flats):
            return "l1", np.concatenate([f[1] for f in flats]) if flats else np.zeros(0)
        return None
    if isinstance(n, SupOf):
        flats = [polyhedral_flatten(p) for p in n.parts]
        if all(f is not None and f[0] == "linf" for f in flats):
            return "linf", np.concatenate([f[1] for f in flats]) if flats else np.zeros(0)
        return None
    return None


def seminorm_kernel(n: NormExpr) -> np.ndarray:
    """Orthonormal basis of {v : n(v) = 0}, computed structurally."""
    if isinstance(n, Lp):
        zero = np.where(n.weights == 0)[0]
        basis = np.zeros((n.dim, len(zero)))
        for j, idx in enumerate(zero):
            basis[idx, j] = 1.0
        return basis
    if isinstance(n, (SupOf, SumOf)):
        blocks = [seminorm_kernel(p) for p in n.parts]
        total = sum(b.shape[1] for b in blocks)
        out = np.zeros((n.dim, total))
        col = 0
        for sl, b in zip(part_slices(n.parts), blocks):
            out[sl, col:col + b.shape[1]] = b
            col += b.shape[1]
        return out
    if isinstance(n, ComposeLinear):
        K = seminorm_kernel(n.inner)
        if K.shape[1] == 0:
            return np.zeros((n.dim, 0))
        proj = np.eye(n.inner.dim) - K @ K.T
        return null_space(proj @ n.embed)
    if isinstance(n, QuotientOf):
        K = seminorm_kernel(n.ambient)
        return column_space(np.hstack([n.basis, K]))
    if isinstance(n, (DualOf, OpNormOf)):
        # supported only on genuine norms, where the kernel is trivial
        return np.zeros((n.dim, 0))
    raise NormError(f"unsupported expression {type(n).__name__}")


def dual_expr(n: NormExpr) -> NormExpr | None:
    """Structural dual expression, when one exists in the family."""
    if isinstance(n, Lp):
        if np.any(n.weights == 0):
            return None
        inv = 1.0 / n.weights if n.dim else n.weights
        return Lp(dual_index(n.p), inv)
    if isinstance(n, SupOf):
        duals = [dual_expr(p) for p in n.parts]
        if any(d is None for d in duals):
            return None
        return SumOf(tuple(duals))
    if isinstance(n, SumOf):
        duals = [dual_expr(p) for p in n.parts]
        if any(d is None for d in duals):
            return None
        return SupOf(tuple(duals))
    if isinstance(n, DualOf):
        return n.inner
    if isinstance(n, ComposeLinear):
        E = n.embed
        if E.shape[0] == E.shape[1]:
            inner_dual = dual_expr(n.inner)
            if inner_dual is None:
                return None
            return ComposeLinear(np.linalg.inv(E).T if E.shape[0] else E, inner_dual)
        return None
    return None


def eval_is_exact(n: NormExpr) -> bool:
    """True when eval_norm follows a certified route throughout the tree."""
    if isinstance(n, Lp):
        return True
    if isinstance(n, (SupOf, SumOf)):
        return all(eval_is_exact(p) for p in n.parts)
    if isinstance(n, ComposeLinear):
        return eval_is_exact(n.inner)
    if isinstance(n, QuotientOf):
        ok = l2_factor(n.ambient) is not None or polyhedral_flatten(n.ambient) is not None
        return ok and eval_is_exact(n.ambient)
    if isinstance(n, DualOf):
        return _dual_route_exact(n.inner)
    if isinstance(n, OpNormOf):
        # conservatively exact only for leaf pairs handled by closed routes
        return isinstance(n.src, Lp) and isinstance(n.tgt, Lp)
    return False


def _dual_route_exact(inner: NormExpr) -> bool:
    if isinstance(inner, Lp):
        return True
    if isinstance(inner, (SupOf, SumOf)):
        return all(_dual_route_exact(p) for p in inner.parts)
    if isinstance(inner, DualOf):
        return eval_is_exact(inner.inner)
    if isinstance(inner, ComposeLinear):
        if inner.embed.shape[0] == inner.embed.shape[1]:
            return _dual_route_exact(inner.inner)
        if isinstance(inner.inner, QuotientOf):
            return _dual_route_exact(inner.inner.ambient)
        de = dual_expr(inner.inner)
        return de is not None and (l2_factor(de) is not None or polyhedral_flatten(de) is not None)
    if isinstance(inner, QuotientOf):
        return _dual_route_exact(inner.ambient)
    return False


# ---------------------------------------------------------------------------
# evaluation


_MEMO: dict = {}
_MEMO_LOCK = threading.Lock()
_MEMO_CAP = 200_000


def _memo_get(key):
    with _MEMO_LOCK:
        return _MEMO.get(key)


def _memo_put(key, value):
    with _MEMO_LOCK:
        if len(_MEMO) >= _MEMO_CAP:
            _MEMO.clear()
        _MEMO[key] = value


def clear_memo() -> None:
    with _MEMO_LOCK:
        _MEMO.clear()


def _lp_eval(n: Lp, v: np.ndarray) -> float:
    if n.dim == 0:
        return 0.0
    scaled = n.weights * np.abs(v)
    if n.p == 1:
        return float(np.sum(scaled))
    if n.p == 2:
        return float(np.linalg.norm(scaled))
    return float(np.max(scaled))


def eval_norm(n: NormExpr, v, tol: float = DEFAULT_TOL) -> float:
    """Evaluate the expression at v.

    Exact up to floating point on Lp/SupOf/SumOf/ComposeLinear nodes;
    Quotient, Dual and OpNorm nodes go through their solvers at the
    requested tolerance.
    """
    v = _as_vec(v, n.dim)
    if isinstance(n, Lp):
        return _lp_eval(n, v)
    if isinstance(n, SupOf):
        vals = [eval_norm(p, v[sl], tol) for p, sl in zip(n.parts, part_slices(n.parts))]
        return max(vals) if vals else 0.0
    if isinstance(n, SumOf):
        return float(sum(eval_norm(p, v[sl], tol) for p, sl in zip(n.parts, part_slices(n.parts))))
    if isinstance(n, ComposeLinear):
        return eval_norm(n.inner, n.embed @ v, tol)
    if isinstance(n, QuotientOf):
        memo_key = (b"q", n.key, v.tobytes(), tol)
        hit = _memo_get(memo_key)
        if hit is None:
            hit = dist_to_subspace(n.ambient, n.basis, v, tol)
            _memo_put(memo_key, hit)
        return hit.value
    if isinstance(n, DualOf):
        memo_key = (b"d", n.key, v.tobytes(), tol)
        hit = _memo_get(memo_key)
        if hit is None:
            hit = dual_norm(n.inner, v, tol)
            _memo_put(memo_key, hit)
        return hit[0]
    if isinstance(n, OpNormOf):
        A = v.reshape(n.tgt.dim, n.src.dim)
        return op_norm(A, n.src, n.tgt, tol).value
    raise NormError(f"unsupported expression {type(n).__name__}")


def subgradient(n: NormExpr, v, tol: float = DEFAULT_TOL) -> np.ndarray:
    """One subgradient of the expression at v (valid under-estimator slope)."""
    v = _as_vec(v, n.dim)
    if isinstance(n, Lp):
        if n.dim == 0:
            return np.zeros(0)
        if n.p == 1:
            return n.weights * np.sign(v)
        if n.p == 2:
            val = _lp_eval(n, v)
            if val <= 0:
                return np.zeros(n.dim)
            return (n.weights ** 2) * v / val
        scaled = n.weights * np.abs(v)
        idx = int(np.argmax(scaled))
        g = np.zeros(n.dim)
        if scaled[idx] > 0:
            g[idx] = n.weights[idx] * np.sign(v[idx])
        return g
    if isinstance(n, SupOf):
        slices = part_slices(n.parts)
        vals = [eval_norm(p, v[sl], tol) for p, sl in zip(n.parts, slices)]
        if not vals:
            return np.zeros(0)
        idx = int(np.argmax(vals))
        g = np.zeros(n.dim)
        g[slices[idx]] = subgradient(n.parts[idx], v[slices[idx]], tol)
        return g
    if isinstance(n, SumOf):
        return np.concatenate(
            [subgradient(p, v[sl], tol) for p, sl in zip(n.parts, part_slices(n.parts))]
        ) if n.parts else np.zeros(0)
    if isinstance(n, ComposeLinear):
        return n.embed.T @ subgradient(n.inner, n.embed @ v, tol)
    if isinstance(n, QuotientOf):
        return _quotient_subgradient(n, v, tol)
    if isinstance(n, DualOf):
        achiever = _dual_achiever(n.inner, v, tol)
        return achiever
    raise NormError(f"no subgradient rule for {type(n).__name__}")


def _quotient_subgradient(n: QuotientOf, v: np.ndarray, tol: float) -> np.ndarray:
    res = dist_to_subspace(n.ambient, n.basis, v, tol)
    r = v + (n.basis @ res.coeffs if n.basis.shape[1] else np.zeros(n.dim))
    B = n.basis
    R = l2_factor(n.ambient)
    if R is not None:
        val = np.linalg.norm(R @ r)
        if val <= 0:
            return np.zeros(n.dim)
        return (R.T @ (R @ r)) / val
    flat = polyhedral_flatten(n.ambient)
    if flat is not None and B.shape[1]:
        g = _flat_annihilating_subgradient(flat, B, r, tol)
        if g is not None:
            return g
    # fallback: project a plain subgradient onto the annihilator (approximate)
    g = subgradient(n.ambient, r, tol)
    if B.shape[1]:
        Q = column_space(B)
        g = g - Q @ (Q.T @ g)
    return g


def _flat_annihilating_subgradient(flat, B: np.ndarray, r: np.ndarray, tol: float) -> np.ndarray | None:
    """Subgradient of a flat l1/linf norm at the optimum of a coset problem.

    Optimality provides one that annihilates the subspace; we recover it
    from the active-set structure, falling back to a small LP.
    """
    kind, w = flat
    d = len(r)
    if kind == "l1":
        fixed = w * np.sign(r) * (np.abs(r) > 1e-9)
        free = np.where((np.abs(r) <= 1e-9) & (w > 0))[0]
        rhs = -B.T @ fixed
        if len(free) == 0:
            return fixed if np.max(np.abs(rhs), initial=0.0) <= 1e-6 else None
        M = B[free].T * w[free]
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        sol = np.clip(sol, -1.0, 1.0)
        if np.max(np.abs(M @ sol - rhs), initial=0.0) <= 1e-6:
            g = fixed.copy()
            g[free] = w[free] * sol
            return g
        builder = LPBuilder()
        svars = [builder.add_var("free") for _ in free]
        for j in svars:
            builder.add_constraint({j: 1.0}, LE, 1.0)
            builder.add_constraint({j: 1.0}, GE, -1.0)
        for row in range(B.shape[1]):
            builder.add_constraint(
                {j: float(M[row, i]) for i, j in enumerate(svars)}, EQ, float(rhs[row])
            )
        lp_res = builder.solve()
        if lp_res.status != OPTIMAL:
            return None
        g = fixed.copy()
        g[free] = w[free] * lp_res.x
        return g
    # linf: convex combination over achieving coordinates
    scaled = w * np.abs(r)
    val = float(np.max(scaled, initial=0.0))
    if val <= 0:
        return np.zeros(d)
    active = np.where(scaled >= val - max(1e-9, 1e-9 * val))[0]
    cols = np.array([w[i] * np.sign(r[i]) * B[i] for i in active]).T  # k x |active|
    builder = LPBuilder()
    mus = [builder.add_var("nonneg") for _ in active]
    builder.add_constraint({j: 1.0 for j in mus}, EQ, 1.0)
    for row in range(B.shape[1]):
        builder.add_constraint({j: float(cols[row, i]) for i, j in enumerate(mus)}, EQ, 0.0)
    lp_res = builder.solve()
    if lp_res.status != OPTIMAL:
        return None
    g = np.zeros(d)
    for i, j in zip(active, range(len(active))):
        g[i] = w[i] * np.sign(r[i]) * lp_res.x[j]
    return g


def _dual_achiever(inner: NormExpr, xi: np.ndarray, tol: float) -> np.ndarray:
    """Vector v with inner(v) <= 1 achieving (or approaching) <xi, v> = dual."""
    if isinstance(inner, Lp):
        w = inner.weights
        if inner.dim == 0:
            return np.zeros(0)
        safe = np.where(w > 0, w, 1.0)
        y = xi / safe
        if inner.p == 1:
            idx = int(np.argmax(np.abs(y) * (w > 0)))
            v = np.zeros(inner.dim)
            if w[idx] > 0:
                v[idx] = np.sign(y[idx]) / w[idx]
            return v
        if inner.p == 2:
            nrm = np.linalg.norm(y)
            if nrm <= 0:
                return np.zeros(inner.dim)
            return (y / safe) / nrm
        return np.where(w > 0, np.sign(y) / safe, 0.0)
    if isinstance(inner, SupOf):
        return np.concatenate(
            [_dual_achiever(p, xi[sl], tol) for p, sl in zip(inner.parts, part_slices(inner.parts))]
        ) if inner.parts else np.zeros(0)
    if isinstance(inner, SumOf):
        slices = part_slices(inner.parts)
        vals = [dual_norm(p, xi[sl], tol)[0] for p, sl in zip(inner.parts, slices)]
        if not vals:
            return np.zeros(0)
        idx = int(np.argmax(vals))
        v = np.zeros(inner.dim)
        v[slices[idx]] = _dual_achiever(inner.parts[idx], xi[slices[idx]], tol)
        return v
    R = l2_factor(inner)
    if R is not None and R.shape[0] == R.shape[1] and R.shape[0] and matrix_rank(R) == R.shape[0]:
        y = np.linalg.solve(R.T, xi)
        nrm = np.linalg.norm(y)
        if nrm <= 0:
            return np.zeros(inner.dim)
        return np.linalg.solve(R, y / nrm)
    # heuristic achiever from the ascent routine
    res = _op_norm_ascent(xi[None, :], inner, lp(1, 1), tol)
    return res[1]


# ---------------------------------------------------------------------------
# distance to a subspace


@dataclass(frozen=True)
class DistResult:
    value: float
    coeffs: np.ndarray  # coefficients of the optimal shift in the basis columns
    route: str
    certified: bool
    gap: float = 0.0


def dist_to_subspace(n: NormExpr, basis, v, tol: float = DEFAULT_TOL, method: str = "auto") -> DistResult:
    """inf over w in span(basis) of n(v + w).

    Routes: least squares for l2-representable ambients, the bundled
    simplex solver for l1/linf ambients, and a cutting-plane scheme on
    subgradients otherwise (upper bound with a certified gap <= tol).
    `method` can force "l2", "lp" or "subgradient".
    """
    v = _as_vec(v, n.dim)
    B = np.asarray(basis, dtype=float)
    if B.ndim != 2 or B.shape[0] != n.dim:
        raise NormError(f"basis must be {n.dim} x k, got {B.shape}")
    k0 = B.shape[1]
    if k0 and matrix_rank(B) < k0:
        raise NormError("basis columns must be linearly independent")

    # structural rewrites preserving the coefficient vector of the shift
    n_rw, B_rw, v_rw = n, B, v
    while True:
        if isinstance(n_rw, ComposeLinear):
            B_rw = n_rw.embed @ B_rw
            v_rw = n_rw.embed @ v_rw
            n_rw = n_rw.inner
            continue
        if isinstance(n_rw, QuotientOf):
            B_rw = np.hstack([B_rw, n_rw.basis])
            n_rw = n_rw.ambient
            continue
        if isinstance(n_rw, (SupOf, SumOf)) and len(n_rw.parts) == 1:
            n_rw = n_rw.parts[0]
            continue
        break
    k = B_rw.shape[1]
    if k == 0:
        return DistResult(eval_norm(n_rw, v_rw, tol), np.zeros(0), "direct", True)

    if method == "auto":
        if l2_factor(n_rw) is not None:
            method = "l2"
        elif polyhedral_flatten(n_rw) is not None:
            method = "lp"
        else:
            method = "subgradient"

    if method == "l2":
        R = l2_factor(n_rw)
        if R is None:
            raise NormError("ambient is not l2-representable")
        t, *_ = np.linalg.lstsq(R @ B_rw, -(R @ v_rw), rcond=None)
        value = float(np.linalg.norm(R @ (v_rw + B_rw @ t)))
        return DistResult(value, t[:k0], "l2", True)
    if method == "lp":
        flat = polyhedral_flatten(n_rw)
        if flat is None:
            raise NormError("ambient does not flatten to l1/linf")
        value, t = _dist_lp(flat, B_rw, v_rw, tol)
        return DistResult(value, t[:k0], "lp", True)
    if method == "subgradient":
        value, t, gap = _dist_cutting_plane(n_rw, B_rw, v_rw, tol)
        return DistResult(value, t[:k0], "subgradient", gap <= tol * max(1.0, value), gap)
    raise NormError(f"unknown method {method!r}")


def _dist_lp(flat, B: np.ndarray, v: np.ndarray, tol: float) -> tuple[float, np.ndarray]:
    kind, w = flat
    d, k = B.shape
    builder = LPBuilder()
    ts = [builder.add_var("free") for _ in range(k)]
    if kind == "l1":
        ss = [builder.add_var("nonneg", obj=float(w[i])) for i in range(d)]
        for i in range(d):
            row = {ts[j]: float(B[i, j]) for j in range(k)}
            row[ss[i]] = -1.0
            builder.add_constraint(row, LE, float(-v[i]))
            row_neg = {ts[j]: float(-B[i, j]) for j in range(k)}
            row_neg[ss[i]] = -1.0
            builder.add_constraint(row_neg, LE, float(v[i]))
    else:
        z = builder.add_var("nonneg", obj=1.0)
        for i in range(d):
            if w[i] == 0:
                continue
            row = {ts[j]: float(w[i] * B[i, j]) for j in range(k)}
            row[z] = -1.0
            builder.add_constraint(row, LE, float(-w[i] * v[i]))
            row_neg = {ts[j]: float(-w[i] * B[i, j]) for j in range(k)}
            row_neg[z] = -1.0
            builder.add_constraint(row_neg, LE, float(w[i] * v[i]))
    res = builder.solve(tol=min(tol, 1e-9))
    if res.status != OPTIMAL:
        raise SolverError(f"distance LP ended with status {res.status}")
    t = res.x[:k]
    return max(0.0, float(res.value)), t


def _dist_cutting_plane(n: NormExpr, B: np.ndarray, v: np.ndarray, tol: float) -> tuple[float, np.ndarray, float]:
    """Kelley cutting-plane minimisation of t -> n(v + B t).

    Each iterate contributes the cut f(t) >= f(t_i) + g_i @ (t - t_i).
    The box is grown whenever the model minimiser pins to it, so the
    final lower bound is global; the certified gap is ub - lb.
    """
    Bq = column_space(B)  # exact span even if the rewrites made B rank deficient
    k = Bq.shape[1]
    coeff_map, *_ = np.linalg.lstsq(B, Bq, rcond=None)

    def f_and_g(t):
        x = v + Bq @ t
        return eval_norm(n, x, tol * 0.1), Bq.T @ subgradient(n, x, tol * 0.1)

    warm, *_ = np.linalg.lstsq(Bq, -v, rcond=None)
    pts = [np.zeros(k), warm]
    for j in range(k):
        e = np.zeros(k)
        e[j] = 1.0 + np.linalg.norm(warm)
        pts.append(warm + e)
        pts.append(warm - e)
    cuts: list[tuple[float, np.ndarray, np.ndarray]] = []
    best_val, best_t = INF, np.zeros(k)
    for t in pts:
        val, g = f_and_g(t)
        cuts.append((val, g, t))
        if val < best_val:
            best_val, best_t = val, t
    R = 4.0 * (np.linalg.norm(v) + np.linalg.norm(warm)) + 4.0
    gap = INF
    for _ in range(1000):
        builder = LPBuilder()
        zvar = builder.add_var("nonneg", obj=1.0)
        tvars = [builder.add_var("free") for _ in range(k)]
        for j in tvars:
            builder.add_constraint({j: 1.0}, LE, R)
            builder.add_constraint({j: 1.0}, GE, -R)
        for val, g, t0 in cuts:
            row = {tvars[j]: float(g[j]) for j in range(k)}
            row[zvar] = -1.0
            builder.add_constraint(row, LE, float(g @ t0 - val))
        res = builder.solve()
        if res.status != OPTIMAL:
            raise SolverError("cutting-plane master LP failed", best_bound=best_val)
        lb = max(0.0, float(res.value))
        t_lp = res.x[1:1 + k]
        pinned = np.max(np.abs(t_lp), initial=0.0) >= R - 1e-6
        # mild stabilisation damps the zigzag typical of pure Kelley steps
        t_new = best_t + 0.7 * (t_lp - best_t)
        val, g = f_and_g(t_new)
        cuts.append((val, g, t_new))
        if not np.allclose(t_new, t_lp):
            val_lp, g_lp = f_and_g(t_lp)
            cuts.append((val_lp, g_lp, t_lp))
            if val_lp < val:
                val, t_new = val_lp, t_lp
        if val < best_val:
            best_val, best_t = val, t_new
        if pinned:
            R *= 2.0
            continue
        gap = best_val - lb
        if gap <= tol * max(1.0, best_val):
            break
    else:
        raise SolverError("cutting-plane did not converge", best_bound=best_val)
    return best_val, coeff_map @ best_t, max(0.0, gap)


# ---------------------------------------------------------------------------
# dual norms


def dual_norm(n: NormExpr, xi, tol: float = DEFAULT_TOL) -> tuple[float, bool]:
    """sup of <xi, v> over the unit ball of n.  Returns (value, exact flag)."""
    xi = _as_vec(xi, n.dim)
    if n.dim == 0:
        return 0.0, True
    if isinstance(n, Lp):
        w = n.weights
        if np.any((w == 0) & (np.abs(xi) > 0)):
            return INF, True
        safe = np.where(w > 0, w, 1.0)
        return _lp_eval(Lp(dual_index(n.p), np.where(w > 0, 1.0 / safe, 0.0)), xi), True
    if isinstance(n, SupOf):
        total, exact = 0.0, True
        for p, sl in zip(n.parts, part_slices(n.parts)):
            val, ex = dual_norm(p, xi[sl], tol)
            total += val
            exact = exact and ex
        return total, exact
    if isinstance(n, SumOf):
        best, exact = 0.0, True
        for p, sl in zip(n.parts, part_slices(n.parts)):
            val, ex = dual_norm(p, xi[sl], tol)
            best = max(best, val)
            exact = exact and ex
        return best, exact
    if isinstance(n, DualOf):
        return eval_norm(n.inner, xi, tol), eval_is_exact(n.inner)
    if isinstance(n, ComposeLinear):
        E = n.embed
        if E.shape[0] == E.shape[1]:
            return dual_norm(n.inner, np.linalg.solve(E.T, xi), tol)
        if isinstance(n.inner, QuotientOf):
            M = np.hstack([E, n.inner.basis])
            if M.shape[0] == M.shape[1] and matrix_rank(M) == M.shape[0]:
                zeta = np.linalg.solve(M.T, np.concatenate([xi, np.zeros(n.inner.basis.shape[1])]))
                return dual_norm(n.inner.ambient, zeta, tol)
        de = dual_expr(n.inner)
        if de is not None:
            eta0, *_ = np.linalg.lstsq(E.T, xi, rcond=None)
            N = null_space(E.T)
            res = dist_to_subspace(de, N, eta0, tol)
            return res.value, res.certified
    if isinstance(n, QuotientOf):
        if n.basis.shape[1] == 0 or np.max(np.abs(n.basis.T @ xi), initial=0.0) <= tol * max(1.0, float(np.linalg.norm(xi))):
            return dual_norm(n.ambient, xi, tol)
        return INF, True
    res = _op_norm_ascent(xi[None, :], n, lp(1, 1), tol)
    return res[0], False


# ---------------------------------------------------------------------------
# operator norms


@dataclass(frozen=True)
class OpNormResult:
    value: float
    exact: bool
    route: str


def _sign_matrix(dim: int, chunk_start: int, chunk: int) -> np.ndarray:
    idx = np.arange(chunk_start, chunk_start + chunk)[:, None]
    bits = (idx >> np.arange(dim)[None, :]) & 1
    return bits * 2.0 - 1.0


def op_norm(A, src: NormExpr, tgt: NormExpr, tol: float = DEFAULT_TOL,
            method: str = "auto", stop_above: float | None = None) -> OpNormResult:
    """Induced norm sup { tgt(A v) : src(v) <= 1 }.

    Exact routes cover lp-leaf sources/targets (column and row rules,
    sign-vector enumeration up to dimension 16, power iteration for the
    l2/l2 pair) and every structural reduction of composite expressions
    to those cases.  Otherwise a projected-ascent heuristic returns a
    certified lower bound flagged as non-exact.  `method="ascent"`
    forces the heuristic.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (tgt.dim, src.dim):
        raise NormError(f"matrix shape {A.shape} does not match ({tgt.dim}, {src.dim})")
    if A.size == 0 or not np.any(A):
        return OpNormResult(0.0, True, "zero")
    if method == "ascent":
        val, _ = _op_norm_ascent(A, src, tgt, tol, stop_above=stop_above)
        return OpNormResult(val, False, "ascent")
    if method != "auto":
        raise NormError(f"unknown method {method!r}")

    # target-side structural reductions
    if isinstance(tgt, ComposeLinear):
        inner = op_norm(tgt.embed @ A, src, tgt.inner, tol, stop_above=stop_above)
        return OpNormResult(inner.value, inner.exact, "tgt-compose:" + inner.route)
    if isinstance(tgt, SupOf) and tgt.parts:
        best = OpNormResult(0.0, True, "tgt-sup")
        exact = True
        for p, sl in zip(tgt.parts, part_slices(tgt.parts)):
            sub = op_norm(A[sl], src, p, tol, stop_above=stop_above)
            exact = exact and sub.exact
            if sub.value > best.value:
                best = sub
        return OpNormResult(best.value, exact, "tgt-sup:" + best.route)

    # source-side structural reductions
    if isinstance(src, ComposeLinear):
        E = src.embed
        if E.shape[0] == E.shape[1]:
            inner = op_norm(A @ np.linalg.inv(E), src.inner, tgt, tol, stop_above=stop_above)
            return OpNormResult(inner.value, inner.exact, "src-compose:" + inner.route)
        if isinstance(src.inner, QuotientOf):
            M = np.hstack([E, src.inner.basis])
            if M.shape[0] == M.shape[1] and matrix_rank(M) == M.shape[0]:
                P = np.linalg.inv(M)[:E.shape[1]]
                inner = op_norm(A @ P, src.inner.ambient, tgt, tol, stop_above=stop_above)
                return OpNormResult(inner.value, inner.exact, "src-quotient:" + inner.route)
    if isinstance(src, SumOf) and src.parts:
        value, exact, routes = 0.0, True, []
        for p, sl in zip(src.parts, part_slices(src.parts)):
            sub = op_norm(A[:, sl], p, tgt, tol, stop_above=stop_above)
            exact = exact and sub.exact
            routes.append(sub.route)
            value = max(value, sub.value)
        return OpNormResult(value, exact, "src-sum")
    if isinstance(src, (SupOf,)) and len(src.parts) == 1:
        return op_norm(A, src.parts[0], tgt, tol, stop_above=stop_above)
    if isinstance(src, QuotientOf):
        # meaningful only when A kills the quotient directions
        if src.basis.shape[1] and np.max(np.abs(A @ src.basis)) > 1e-9 * max(1.0, float(np.abs(A).max())):
            return OpNormResult(INF, True, "src-quotient-unbounded")
        return op_norm(A, src.ambient, tgt, tol, stop_above=stop_above)

    # leaf routes
    if isinstance(src, Lp) and src.p == 1:
        best, exact = 0.0, True
        for j in range(src.dim):
            w = src.weights[j]
            col = A[:, j]
            if w == 0:
                if np.any(np.abs(col) > 0):
                    return OpNormResult(INF, True, "src-l1-seminorm")
                continue
            val = eval_norm(tgt, col / w, tol)
            best = max(best, val)
        return OpNormResult(best, exact and eval_is_exact(tgt), "src-l1-columns")
    if isinstance(src, Lp) and src.p == INF and src.dim <= ENUM_CAP:
        if np.any(src.weights == 0):
            cols = np.where(src.weights == 0)[0]
            if np.any(np.abs(A[:, cols]) > 0):
                return OpNormResult(INF, True, "src-linf-seminorm")
        safe = np.where(src.weights > 0, src.weights, 1.0)
        best = 0.0
        total = 1 << src.dim
        chunk = 1 << 13
        for start in range(0, total, chunk):
            S = _sign_matrix(src.dim, start, min(chunk, total - start))
            V = (S / safe) * (src.weights > 0)
            for row in V @ A.T:
                best = max(best, eval_norm(tgt, row, tol))
        return OpNormResult(best, eval_is_exact(tgt), "src-linf-signs")

    Rs, Rt = l2_factor(src), l2_factor(tgt)
    if Rs is not None and Rt is not None:
        if matrix_rank(Rs) < src.dim:
            ker = null_space(Rs)
            if np.max(np.abs(A @ ker), initial=0.0) > 1e-9 * max(1.0, float(np.abs(A).max())):
                return OpNormResult(INF, True, "src-l2-seminorm")
        M = Rt @ A @ np.linalg.pinv(Rs)
        return OpNormResult(_power_iteration(M, tol), True, "power")
    if Rs is not None and isinstance(tgt, Lp) and tgt.p == 1 and tgt.dim <= ENUM_CAP:
        if matrix_rank(Rs) == src.dim:
            Rp = np.linalg.pinv(Rs)  # value per sign pattern s is ||(w*s) @ A @ Rp||_2
            best = 0.0
            total = 1 << tgt.dim
            chunk = 1 << 13
            for start in range(0, total, chunk):
                S = _sign_matrix(tgt.dim, start, min(chunk, total - start))
                C = (S * tgt.weights) @ A @ Rp
                best = max(best, float(np.max(np.linalg.norm(C, axis=1), initial=0.0)))
            return OpNormResult(best, True, "tgt-l1-signs")
    if isinstance(tgt, Lp) and tgt.p == INF:
        best, exact = 0.0, True
        for i in range(tgt.dim):
            w = tgt.weights[i]
            if w == 0:
                continue
            val, ex = dual_norm(src, A[i], tol)
            exact = exact and ex
            best = max(best, w * val)
        return OpNormResult(best, exact, "tgt-linf-rows")
    if isinstance(tgt, Lp) and tgt.dim == 1:
        val, ex = dual_norm(src, A[0], tol)
        return OpNormResult(float(tgt.weights[0]) * val, ex, "tgt-scalar")

    val, _ = _op_norm_ascent(A, src, tgt, tol, stop_above=stop_above)
    return OpNormResult(val, False, "ascent")


def _power_iteration(M: np.ndarray, tol: float) -> float:
    """Largest singular value of M via power iteration on M^T M."""
    if M.size == 0 or not np.any(M):
        return 0.0
    G = M.T @ M
    d = G.shape[0]
    scale = float(np.trace(G))
    if scale <= 0:
        return 0.0
    best = 0.0
    for variant in range(2):
        x = np.ones(d) + np.arange(d) / (d + 1.0)
        if variant == 1:
            x = x * ((-1.0) ** np.arange(d))
        x /= np.linalg.norm(x)
        lam_prev = -1.0
        for _ in range(200_000):
            y = G @ x
            ny = np.linalg.norm(y)
            if ny <= 0:
                lam_prev = 0.0
                break
            x = y / ny
            lam = float(x @ (G @ x))
            if abs(lam - lam_prev) <= 1e-3 * tol * max(lam, 1e-12):
                lam_prev = lam
                break
            lam_prev = lam
        best = max(best, math.sqrt(max(lam_prev, 0.0)))
    return best


def _stable_seed(*chunks: bytes) -> int:
    h = hashlib.sha256()
    for c in chunks:
        h.update(c)
    return int.from_bytes(h.digest()[:8], "little")


def _op_norm_ascent(A: np.ndarray, src: NormExpr, tgt: NormExpr, tol: float,
                    stop_above: float | None = None) -> tuple[float, np.ndarray]:
    """Projected subgradient ascent on the unit sphere of src.

    Every feasible iterate certifies a lower bound; the best one is
    returned together with its achiever.  Deterministic: the random
    starts are seeded from the input data.
    """
    d = src.dim
    rng = np.random.default_rng(_stable_seed(A.tobytes(), src.key, tgt.key))
    starts: list[np.ndarray] = []
    for j in range(min(d, 8)):
        e = np.zeros(d)
        e[j] = 1.0
        starts.append(e)
    for _ in range(6):
        starts.append(rng.standard_normal(d))
    best_val, best_vec = 0.0, np.zeros(d)
    for v0 in starts:
        nv = eval_norm(src, v0, tol)
        if nv <= 1e-14:
            continue
        v = v0 / nv
        for it in range(60):
            Av = A @ v
            val = eval_norm(tgt, Av, tol)
            if val > best_val:
                best_val, best_vec = val, v.copy()
                if stop_above is not None and best_val > stop_above:
                    return best_val, best_vec
            g = A.T @ subgradient(tgt, Av, tol)
            gn = np.linalg.norm(g)
            if gn <= 1e-14:
                break
            step = 0.5 / math.sqrt(it + 1.0)
            v_new = v + step * (g / gn) * np.linalg.norm(v)
            nv = eval_norm(src, v_new, tol)
            if nv <= 1e-14:
                break
            v_new = v_new / nv
            if np.linalg.norm(v_new - v) <= 1e-12:
                v = v_new
                break
            v = v_new
        Av = A @ v
        val = eval_norm(tgt, Av, tol)
        if val > best_val:
            best_val, best_vec = val, v.copy()
            if stop_above is not None and best_val > stop_above:
                return best_val, best_vec
    return best_val, best_vec
