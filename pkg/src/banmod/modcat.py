"""Objects, elements and morphisms of the category of Banach modules
over a finite atomic measure space.

An object assigns to each atom a finite-dimensional fiber with a norm
expression; an element is one vector per atom; a morphism is one matrix
per atom whose induced norm between the fiber norms is at most one.
With strictly positive atom masses, almost-everywhere notions collapse
to per-atom ones, and finite-dimensional fibers are complete, so every
object here is automatically a Banach module.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .measure import L0Fun, MeasureSpace, l0_distance, product_space
from .norms import (
    NormExpr,
    Lp,
    eval_norm,
    lp,
    matrix_rank,
    op_norm,
)

MORPHISM_TOL = 1e-9


class ModuleError(ValueError):
    pass


class MorphismNormError(ModuleError):
    pass


def _ro(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class Fiber:
    dim: int
    norm: NormExpr

    def __post_init__(self):
        if self.dim < 0:
            raise ModuleError("fiber dimension must be nonnegative")
        if self.norm.dim != self.dim:
            raise ModuleError(f"norm dimension {self.norm.dim} does not match fiber dimension {self.dim}")


@dataclass(frozen=True, eq=False)
class ModuleObj:
    space: MeasureSpace
    fibers: tuple[Fiber, ...]

    def __post_init__(self):
        fibers = tuple(self.fibers)
        if len(fibers) != self.space.n_atoms:
            raise ModuleError("one fiber per atom required")
        object.__setattr__(self, "fibers", fibers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.fibers)

    @property
    def is_zero(self) -> bool:
        return all(f.dim == 0 for f in self.fibers)

    @cached_property
    def key(self) -> bytes:
        h = hashlib.sha256()
        h.update(repr((self.space.ids, self.space.masses)).encode())
        for f in self.fibers:
            h.update(f.norm.key)
        return h.digest()

    def __eq__(self, other):
        return isinstance(other, ModuleObj) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"ModuleObj(dims={self.dims})"


def make_module(space: MeasureSpace, fibers) -> ModuleObj:
    return ModuleObj(space, tuple(Fiber(d, n) for d, n in fibers))


def zero_module(space: MeasureSpace) -> ModuleObj:
    return make_module(space, [(0, lp(2, 0)) for _ in range(space.n_atoms)])


def free_module(space: MeasureSpace, dim: int, p: float = 2) -> ModuleObj:
    """Constant-fiber module with an unweighted lp norm on every atom."""
    return make_module(space, [(dim, lp(p, dim)) for _ in range(space.n_atoms)])


@dataclass(frozen=True, eq=False)
class Element:
    module: ModuleObj
    vectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        vecs = []
        for fiber, v in zip(self.module.fibers, self.vectors, strict=True):
            v = np.asarray(v, dtype=float)
            if v.shape != (fiber.dim,):
                raise ModuleError(f"vector shape {v.shape} does not match fiber dim {fiber.dim}")
            vecs.append(_ro(v))
        object.__setattr__(self, "vectors", tuple(vecs))

    def _check(self, other: "Element") -> None:
        if self.module != other.module:
            raise ModuleError("elements live in different modules")

    def __add__(self, other):
        self._check(other)
        return Element(self.module, tuple(a + b for a, b in zip(self.vectors, other.vectors)))

    def __sub__(self, other):
        self._check(other)
        return Element(self.module, tuple(a - b for a, b in zip(self.vectors, other.vectors)))

    def __neg__(self):
        return Element(self.module, tuple(-a for a in self.vectors))

    def scale(self, f) -> "Element":
        """Module action of a function (or constant) on the element."""
        if isinstance(f, L0Fun):
            if f.space != self.module.space:
                raise ModuleError("function lives on a different space")
            return Element(self.module, tuple(c * v for c, v in zip(f.values, self.vectors)))
        return Element(self.module, tuple(float(f) * v for v in self.vectors))

    def __eq__(self, other):
        return (
            isinstance(other, Element)
            and self.module == other.module
            and all(np.array_equal(a, b) for a, b in zip(self.vectors, other.vectors))
        )

    def __hash__(self):
        return hash((self.module, tuple(v.tobytes() for v in self.vectors)))


def zero_element(M: ModuleObj) -> Element:
    return Element(M, tuple(np.zeros(f.dim) for f in M.fibers))


def scalar_action(f: L0Fun, v: Element) -> Element:
    return v.scale(f)


def pointwise_norm(v: Element, tol: float = 1e-10) -> L0Fun:
    vals = [eval_norm(f.norm, x, tol) for f, x in zip(v.module.fibers, v.vectors)]
    return L0Fun(v.module.space, vals)


def module_distance(v: Element, w: Element) -> float:
    v._check(w)
    from .measure import const_fun

    return l0_distance(pointwise_norm(v - w), const_fun(v.module.space, 0.0))


@dataclass(frozen=True, eq=False)
class Morphism:
    """Per-atom matrices with pointwise operator norm at most one.

    norm_bounds caches one upper bound per atom.  Structural bounds can
    be supplied by constructions that guarantee them (compositions,
    isometric inclusions, quotient projections); otherwise bounds are
    computed at construction time.  `check=False` skips the norm gate
    and is reserved for deliberately invalid morphisms in fault tests.
    """

    source: ModuleObj
    target: ModuleObj
    mats: tuple[np.ndarray, ...]
    norm_bounds: tuple[float, ...] | None = None
    norm_exact: tuple[bool, ...] | None = None
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.source.space != self.target.space:
            raise ModuleError("source and target live on different spaces")
        mats = []
        for fs, ft, A in zip(self.source.fibers, self.target.fibers, self.mats, strict=True):
            A = np.asarray(A, dtype=float)
            if A.shape != (ft.dim, fs.dim):
                raise ModuleError(f"matrix shape {A.shape} does not match ({ft.dim}, {fs.dim})")
            mats.append(_ro(A))
        object.__setattr__(self, "mats", tuple(mats))
        if self.norm_bounds is None:
            bounds, exact = [], []
            for fs, ft, A in zip(self.source.fibers, self.target.fibers, self.mats):
                res = op_norm(A, fs.norm, ft.norm, stop_above=1.0 + 10 * MORPHISM_TOL if self.check else None)
                bounds.append(res.value)
                exact.append(res.exact)
            object.__setattr__(self, "norm_bounds", tuple(bounds))
            object.__setattr__(self, "norm_exact", tuple(exact))
        else:
            object.__setattr__(self, "norm_bounds", tuple(float(b) for b in self.norm_bounds))
            if self.norm_exact is None:
                object.__setattr__(self, "norm_exact", tuple(True for _ in self.norm_bounds))
        if self.check:
            for k, b in enumerate(self.norm_bounds):
                if b > 1.0 + MORPHISM_TOL:
                    raise MorphismNormError(
                        f"pointwise operator norm {b:.12g} exceeds 1 at atom {self.source.space.ids[k]!r}"
                    )

    def __call__(self, v: Element) -> Element:
        if v.module != self.source:
            raise ModuleError("element does not live in the source module")
        return Element(self.target, tuple(A @ x for A, x in zip(self.mats, v.vectors)))

    def __eq__(self, other):
        return (
            isinstance(other, Morphism)
            and self.source == other.source
            and self.target == other.target
            and all(np.array_equal(a, b) for a, b in zip(self.mats, other.mats))
        )

    def __hash__(self):
        return hash((self.source, self.target, tuple(A.tobytes() for A in self.mats)))

    def __repr__(self):
        return f"Morphism({self.source!r} -> {self.target!r})"


def identity(M: ModuleObj) -> Morphism:
    mats = tuple(np.eye(f.dim) for f in M.fibers)
    bounds = tuple(1.0 if f.dim else 0.0 for f in M.fibers)
    return Morphism(M, M, mats, norm_bounds=bounds)


def zero_morphism(M: ModuleObj, N: ModuleObj) -> Morphism:
    mats = tuple(np.zeros((ft.dim, fs.dim)) for fs, ft in zip(M.fibers, N.fibers))
    return Morphism(M, N, mats, norm_bounds=tuple(0.0 for _ in M.fibers))


def compose(phi: Morphism, psi: Morphism) -> Morphism:
    """phi after psi."""
    if psi.target != phi.source:
        raise ModuleError("morphisms do not compose")
    mats = tuple(A @ B for A, B in zip(phi.mats, psi.mats))
    bounds = tuple(a * b for a, b in zip(phi.norm_bounds, psi.norm_bounds))
    return Morphism(psi.source, phi.target, mats, norm_bounds=bounds)


def morphism_close(phi: Morphism, psi: Morphism, tol: float = 1e-9) -> bool:
    if phi.source != psi.source or phi.target != psi.target:
        return False
    return all(np.max(np.abs(a - b), initial=0.0) <= tol for a, b in zip(phi.mats, psi.mats))


def residual(phi: Morphism, psi: Morphism) -> float:
    """Max absolute entry difference between two parallel morphisms."""
    if phi.source != psi.source or phi.target != psi.target:
        raise ModuleError("morphisms are not parallel")
    return max((float(np.max(np.abs(a - b), initial=0.0)) for a, b in zip(phi.mats, psi.mats)), default=0.0)


def is_morphism(source: ModuleObj, target: ModuleObj, mats, tol: float = 1e-6):
    """Check the pointwise norm condition; returns (ok, per-atom report).

    Each report entry carries (value, exact_route).  On heuristic routes
    the value is a certified lower bound, so `ok` may accept a slightly
    too-large norm but never rejects a valid morphism.
    """
    if source.space != target.space:
        return False, []
    report = []
    ok = True
    for fs, ft, A in zip(source.fibers, target.fibers, mats, strict=True):
        A = np.asarray(A, dtype=float)
        if A.shape != (ft.dim, fs.dim):
            raise ModuleError("matrix shape mismatch")
        res = op_norm(A, fs.norm, ft.norm, stop_above=1.0 + 2 * tol)
        report.append((res.value, res.exact))
        if res.value > 1.0 + tol:
            ok = False
    return ok, report


def is_mono(phi: Morphism) -> bool:
    """Injective, equivalently full column rank on every atom."""
    return all(matrix_rank(A) == A.shape[1] for A in phi.mats)


def is_epi(phi: Morphism) -> bool:
    """Dense range; on finite-dimensional fibers this is full row rank per atom."""
    return all(matrix_rank(A) == A.shape[0] for A in phi.mats)


def glue(partition, elems) -> Element:
    """Atom-wise selection: on the atoms of block n, take the n-th element."""
    elems = list(elems)
    if not elems:
        raise ModuleError("empty glue")
    module = elems[0].module
    for v in elems:
        if v.module != module:
            raise ModuleError("elements live in different modules")
    blocks = [set(block) for block in partition]
    if len(blocks) != len(elems):
        raise ModuleError("one element per partition block required")
    seen: set = set()
    for block in blocks:
        if block & seen:
            raise ModuleError("partition blocks overlap")
        seen |= block
    if seen != set(module.space.ids):
        raise ModuleError("partition does not cover the space")
    vectors = []
    for k, atom in enumerate(module.space.ids):
        idx = next(i for i, block in enumerate(blocks) if atom in block)
        vectors.append(elems[idx].vectors[k])
    return Element(module, tuple(vectors))


def hilbert_module(space: MeasureSpace, labels) -> tuple[ModuleObj, dict]:
    """Free module on a finite label set with l2 fibers, plus its basis.

    The basis element for label s has the indicator of the whole space in
    slot s, so its pointwise norm is identically one.
    """
    labels = list(labels)
    n = len(labels)
    M = free_module(space, n, p=2)
    basis = {}
    for i, s in enumerate(labels):
        vecs = []
        for _ in range(space.n_atoms):
            e = np.zeros(n)
            e[i] = 1.0
            vecs.append(e)
        basis[s] = Element(M, tuple(vecs))
    return M, basis


def lb_module(X: MeasureSpace, M: ModuleObj) -> ModuleObj:
    """Module over X x Y whose fiber at (x, y) is M's fiber at y."""
    Y = M.space
    prod = product_space(X, Y)
    fibers = []
    for _ in X.ids:
        for f in M.fibers:
            fibers.append((f.dim, f.norm))
    return make_module(prod, fibers)


def lb_constant(X: MeasureSpace, v: Element) -> Element:
    """The constant lift x -> v into the module over X x Y."""
    module = lb_module(X, v.module)
    vectors = []
    for _ in X.ids:
        vectors.extend(v.vectors)
    return Element(module, tuple(vectors))
