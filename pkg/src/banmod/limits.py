"""Limit constructions: kernels, equalisers, products, pullbacks, inverse
limits over finite directed posets, and the generic finite-diagram limit
engine built from products and equalisers.

Every limit object is represented concretely as a basis-embedded
submodule of a finite sup-product: per atom an orthonormal thread basis
K cuts the compatibility equations out of the product, the fiber norm is
the product norm pulled back along K, and legs are block rows of K.
That uniform shape is what makes mediating morphisms a single
least-squares-free formula downstream.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .modcat import (
    ModuleObj,
    Morphism,
    compose,
    identity,
    make_module,
    residual,
    zero_morphism,
)
from .norms import ComposeLinear, SupOf, null_space

VALIDATE_TOL = 1e-9


class CategoryError(ValueError):
    pass


class DiagramError(ValueError):
    pass


# ---------------------------------------------------------------------------
# finite index categories


@dataclass(frozen=True)
class MorData:
    ident: str
    dom: str
    cod: str


@dataclass(frozen=True, eq=False)
class FiniteCategory:
    """Explicit finite category: objects, all morphisms (identities included),
    and a total composition table for composable pairs."""

    objects: tuple[str, ...]
    morphisms: tuple[MorData, ...]
    compose_table: dict
    identities: dict

    def __post_init__(self):
        obj_set = set(self.objects)
        if len(obj_set) != len(self.objects):
            raise CategoryError("duplicate objects")
        by_id = {}
        for m in self.morphisms:
            if m.ident in by_id:
                raise CategoryError(f"duplicate morphism id {m.ident!r}")
            if m.dom not in obj_set or m.cod not in obj_set:
                raise CategoryError(f"morphism {m.ident!r} has unknown endpoints")
            by_id[m.ident] = m
        object.__setattr__(self, "_by_id", by_id)
        for x in self.objects:
            if x not in self.identities or self.identities[x] not in by_id:
                raise CategoryError(f"missing identity for {x!r}")
            ident = by_id[self.identities[x]]
            if ident.dom != x or ident.cod != x:
                raise CategoryError(f"identity of {x!r} has wrong endpoints")
        for f in self.morphisms:
            for g in self.morphisms:
                if f.cod != g.dom:
                    continue
                if (f.ident, g.ident) not in self.compose_table:
                    raise CategoryError(f"composition missing for {g.ident!r} after {f.ident!r}")
                h = by_id.get(self.compose_table[(f.ident, g.ident)])
                if h is None or h.dom != f.dom or h.cod != g.cod:
                    raise CategoryError("composition table entry has wrong endpoints")
        # unit laws and associativity
        for f in self.morphisms:
            if self.compose_table[(self.identities[f.dom], f.ident)] != f.ident:
                raise CategoryError("left unit law violated")
            if self.compose_table[(f.ident, self.identities[f.cod])] != f.ident:
                raise CategoryError("right unit law violated")
        for f in self.morphisms:
            for g in self.morphisms:
                if f.cod != g.dom:
                    continue
                gf = self.compose_table[(f.ident, g.ident)]
                for h in self.morphisms:
                    if g.cod != h.dom:
                        continue
                    hg = self.compose_table[(g.ident, h.ident)]
                    if self.compose_table[(gf, h.ident)] != self.compose_table[(f.ident, hg)]:
                        raise CategoryError("composition is not associative")

    def morphism(self, ident: str) -> MorData:
        return self._by_id[ident]

    @property
    def nonidentity(self) -> tuple[MorData, ...]:
        idents = set(self.identities.values())
        return tuple(m for m in self.morphisms if m.ident not in idents)


def discrete_category(objects) -> FiniteCategory:
    objects = tuple(str(x) for x in objects)
    mors = tuple(MorData(f"id_{x}", x, x) for x in objects)
    table = {(f"id_{x}", f"id_{x}"): f"id_{x}" for x in objects}
    return FiniteCategory(objects, mors, table, {x: f"id_{x}" for x in objects})


def parallel_pair_category() -> FiniteCategory:
    mors = (
        MorData("id_X", "X", "X"),
        MorData("id_Y", "Y", "Y"),
        MorData("a", "X", "Y"),
        MorData("b", "X", "Y"),
    )
    table = {
        ("id_X", "id_X"): "id_X",
        ("id_Y", "id_Y"): "id_Y",
        ("id_X", "a"): "a",
        ("a", "id_Y"): "a",
        ("id_X", "b"): "b",
        ("b", "id_Y"): "b",
    }
    return FiniteCategory(("X", "Y"), mors, table, {"X": "id_X", "Y": "id_Y"})


def cospan_category() -> FiniteCategory:
    mors = (
        MorData("id_X", "X", "X"),
        MorData("id_Y", "Y", "Y"),
        MorData("id_Z", "Z", "Z"),
        MorData("f", "X", "Z"),
        MorData("g", "Y", "Z"),
    )
    table = {
        ("id_X", "id_X"): "id_X",
        ("id_Y", "id_Y"): "id_Y",
        ("id_Z", "id_Z"): "id_Z",
        ("id_X", "f"): "f",
        ("f", "id_Z"): "f",
        ("id_Y", "g"): "g",
        ("g", "id_Z"): "g",
    }
    return FiniteCategory(("X", "Y", "Z"), mors, table, {"X": "id_X", "Y": "id_Y", "Z": "id_Z"})


def span_category() -> FiniteCategory:
    mors = (
        MorData("id_X", "X", "X"),
        MorData("id_Y", "Y", "Y"),
        MorData("id_Q", "Q", "Q"),
        MorData("f", "Q", "X"),
        MorData("g", "Q", "Y"),
    )
    table = {
        ("id_X", "id_X"): "id_X",
        ("id_Y", "id_Y"): "id_Y",
        ("id_Q", "id_Q"): "id_Q",
        ("id_Q", "f"): "f",
        ("f", "id_X"): "f",
        ("id_Q", "g"): "g",
        ("g", "id_Y"): "g",
    }
    return FiniteCategory(("X", "Y", "Q"), mors, table, {"X": "id_X", "Y": "id_Y", "Q": "id_Q"})


def poset_category(elements, leq_pairs) -> FiniteCategory:
    """Category of a finite poset: one arrow i -> j whenever i <= j."""
    elements = tuple(str(x) for x in elements)
    rel = {(str(a), str(b)) for a, b in leq_pairs}
    for x in elements:
        rel.add((x, x))
    for a, b in list(rel):
        for c, d in list(rel):
            if b == c and (a, d) not in rel:
                raise CategoryError(f"relation is not transitive: {(a, d)} missing")
    def mid(a, b):
        return f"le_{a}_{b}" if a != b else f"id_{a}"
    mors = tuple(MorData(mid(a, b), a, b) for a, b in sorted(rel))
    table = {}
    for a, b in rel:
        for c, d in rel:
            if b == c:
                table[(mid(a, b), mid(c, d))] = mid(a, d)
    return FiniteCategory(elements, mors, table, {x: mid(x, x) for x in elements})


def opposite_category(cat: FiniteCategory) -> FiniteCategory:
    mors = tuple(MorData(m.ident, m.cod, m.dom) for m in cat.morphisms)
    table = {(g, f): h for (f, g), h in cat.compose_table.items()}
    return FiniteCategory(cat.objects, mors, table, dict(cat.identities))


# ---------------------------------------------------------------------------
# diagrams and cones


@dataclass(frozen=True, eq=False)
class Diagram:
    index: FiniteCategory
    on_objects: dict
    on_morphisms: dict
    validate_tol: float = VALIDATE_TOL

    def __post_init__(self):
        for x in self.index.objects:
            if x not in self.on_objects:
                raise DiagramError(f"object {x!r} has no assignment")
        space = None
        for x in self.index.objects:
            M = self.on_objects[x]
            space = M.space if space is None else space
            if M.space != space:
                raise DiagramError("diagram modules live on different spaces")
        for m in self.index.morphisms:
            if m.ident not in self.on_morphisms:
                raise DiagramError(f"morphism {m.ident!r} has no assignment")
            phi = self.on_morphisms[m.ident]
            if phi.source != self.on_objects[m.dom] or phi.target != self.on_objects[m.cod]:
                raise DiagramError(f"assignment of {m.ident!r} has wrong endpoints")
        for x in self.index.objects:
            ident = self.on_morphisms[self.index.identities[x]]
            if residual(ident, identity(self.on_objects[x])) > self.validate_tol:
                raise DiagramError(f"identity of {x!r} is not assigned the identity morphism")
        for f in self.index.morphisms:
            for g in self.index.morphisms:
                if f.cod != g.dom:
                    continue
                h = self.index.compose_table[(f.ident, g.ident)]
                lhs = compose(self.on_morphisms[g.ident], self.on_morphisms[f.ident])
                if residual(lhs, self.on_morphisms[h]) > self.validate_tol:
                    raise DiagramError(f"functoriality fails on {g.ident!r} after {f.ident!r}")

    @property
    def space(self):
        return self.on_objects[self.index.objects[0]].space if self.index.objects else None


@dataclass(frozen=True, eq=False)
class Cone:
    diagram: Diagram
    apex: ModuleObj
    legs: dict

    def max_residual(self) -> float:
        worst = 0.0
        for m in self.diagram.index.morphisms:
            lhs = compose(self.diagram.on_morphisms[m.ident], self.legs[m.dom])
            worst = max(worst, residual(lhs, self.legs[m.cod]))
        return worst

    def validate(self, tol: float = VALIDATE_TOL) -> None:
        for x in self.diagram.index.objects:
            leg = self.legs[x]
            if leg.source != self.apex or leg.target != self.diagram.on_objects[x]:
                raise DiagramError(f"leg {x!r} has wrong endpoints")
        r = self.max_residual()
        if r > tol:
            raise DiagramError(f"cone does not commute (residual {r:.3g})")


@dataclass(frozen=True, eq=False)
class Cocone:
    diagram: Diagram
    nadir: ModuleObj
    legs: dict

    def max_residual(self) -> float:
        worst = 0.0
        for m in self.diagram.index.morphisms:
            lhs = compose(self.legs[m.cod], self.diagram.on_morphisms[m.ident])
            worst = max(worst, residual(lhs, self.legs[m.dom]))
        return worst

    def validate(self, tol: float = VALIDATE_TOL) -> None:
        for x in self.diagram.index.objects:
            leg = self.legs[x]
            if leg.source != self.diagram.on_objects[x] or leg.target != self.nadir:
                raise DiagramError(f"leg {x!r} has wrong endpoints")
        r = self.max_residual()
        if r > tol:
            raise DiagramError(f"cocone does not commute (residual {r:.3g})")


@dataclass(frozen=True, eq=False)
class LimitData:
    """A constructed limit cone plus the data the mediator formula needs."""

    diagram: Diagram
    apex: ModuleObj
    legs: dict
    kind: str
    ambient: ModuleObj
    obj_order: tuple
    basis: tuple | None  # per atom, ambient_dim x apex_dim orthonormal; None = apex is the ambient

    @property
    def cone(self) -> Cone:
        return Cone(self.diagram, self.apex, self.legs)


# ---------------------------------------------------------------------------
# products


def ell_inf_product(Ms) -> tuple[ModuleObj, list]:
    """Sup-normed concatenation; returns the module and per-atom block slices."""
    Ms = list(Ms)
    if not Ms:
        raise DiagramError("empty product ambient")
    space = Ms[0].space
    for M in Ms:
        if M.space != space:
            raise DiagramError("modules live on different spaces")
    fibers = []
    slices = []
    for a in range(space.n_atoms):
        parts = tuple(M.fibers[a].norm for M in Ms)
        dims = [M.fibers[a].dim for M in Ms]
        offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        slices.append([slice(int(offs[i]), int(offs[i + 1])) for i in range(len(Ms))])
        fibers.append((int(offs[-1]), SupOf(parts)))
    return make_module(space, fibers), slices


def product(Ms, index_names=None) -> LimitData:
    """Finite product with coordinate projections; the empty product is zero."""
    Ms = list(Ms)
    names = tuple(index_names) if index_names is not None else tuple(str(i) for i in range(len(Ms)))
    if len(names) != len(Ms):
        raise DiagramError("one name per factor required")
    if not Ms:
        raise DiagramError("product of an empty family needs a space; use limit_of_diagram")
    space = Ms[0].space
    cat = discrete_category(names)
    diagram = Diagram(cat, {n: M for n, M in zip(names, Ms)},
                      {f"id_{n}": identity(M) for n, M in zip(names, Ms)})
    if len(Ms) == 1:
        apex = Ms[0]
        legs = {names[0]: identity(Ms[0])}
        return LimitData(diagram, apex, legs, "product", apex, names, None)
    apex, slices = ell_inf_product(Ms)
    legs = {}
    for i, (n, M) in enumerate(zip(names, Ms)):
        mats = []
        for a in range(space.n_atoms):
            sl = slices[a][i]
            mat = np.zeros((M.fibers[a].dim, apex.fibers[a].dim))
            mat[:, sl] = np.eye(M.fibers[a].dim)
            mats.append(mat)
        legs[n] = Morphism(apex, M, tuple(mats),
                           norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                           norm_exact=tuple(False for _ in range(space.n_atoms)))
    return LimitData(diagram, apex, legs, "product", apex, names, None)


# ---------------------------------------------------------------------------
# kernel-style constructions


def _embedded_submodule(ambient: ModuleObj, constraint_mats) -> tuple[ModuleObj, tuple]:
    """Submodule cut out per atom by linear equations, with pullback norms."""
    bases = []
    fibers = []
    for a, fib in enumerate(ambient.fibers):
        K = null_space(np.asarray(constraint_mats[a], dtype=float))
        bases.append(K)
        if K.shape[0] == K.shape[1] and np.array_equal(K, np.eye(K.shape[0])):
            fibers.append((fib.dim, fib.norm))
        else:
            fibers.append((K.shape[1], ComposeLinear(K, fib.norm)))
    return make_module(ambient.space, fibers), tuple(bases)


def _basis_leg(sub: ModuleObj, target: ModuleObj, bases, row_slices) -> Morphism:
    space = sub.space
    mats = tuple(bases[a][row_slices[a]] for a in range(space.n_atoms))
    return Morphism(sub, target, mats,
                    norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                    norm_exact=tuple(False for _ in range(space.n_atoms)))


@dataclass(frozen=True, eq=False)
class KernelResult:
    module: ModuleObj
    inclusion: Morphism
    limit: LimitData


def kernel(phi: Morphism) -> KernelResult:
    """Preimage of zero with the restricted norm and its inclusion."""
    M, N = phi.source, phi.target
    space = M.space
    sub, bases = _embedded_submodule(M, phi.mats)
    inclusion = Morphism(sub, M, bases,
                         norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                         norm_exact=tuple(False for _ in range(space.n_atoms)))
    cat = parallel_pair_category()
    diagram = Diagram(cat, {"X": M, "Y": N},
                      {"id_X": identity(M), "id_Y": identity(N),
                       "a": phi, "b": zero_morphism(M, N)})
    legs = {"X": inclusion, "Y": compose(phi, inclusion)}
    data = LimitData(diagram, sub, legs, "kernel", M, ("X",), bases)
    return KernelResult(sub, inclusion, data)


def halved_difference(phi: Morphism, psi: Morphism) -> Morphism:
    """(phi - psi) / 2; the halving keeps the norm bound at one."""
    if phi.source != psi.source or phi.target != psi.target:
        raise DiagramError("not a parallel pair")
    mats = tuple((a - b) / 2.0 for a, b in zip(phi.mats, psi.mats))
    bounds = tuple((a + b) / 2.0 for a, b in zip(phi.norm_bounds, psi.norm_bounds))
    return Morphism(phi.source, phi.target, mats, norm_bounds=bounds,
                    norm_exact=tuple(False for _ in bounds))


@dataclass(frozen=True, eq=False)
class EqualizerResult:
    module: ModuleObj
    inclusion: Morphism
    limit: LimitData


def equalizer(phi: Morphism, psi: Morphism) -> EqualizerResult:
    ker = kernel(halved_difference(phi, psi))
    M, N = phi.source, phi.target
    cat = parallel_pair_category()
    diagram = Diagram(cat, {"X": M, "Y": N},
                      {"id_X": identity(M), "id_Y": identity(N), "a": phi, "b": psi})
    legs = {"X": ker.inclusion, "Y": compose(phi, ker.inclusion)}
    data = LimitData(diagram, ker.module, legs, "equalizer", M, ("X",), ker.limit.basis)
    return EqualizerResult(ker.module, ker.inclusion, data)


@dataclass(frozen=True, eq=False)
class PullbackResult:
    module: ModuleObj
    to_first: Morphism
    to_second: Morphism
    limit: LimitData


def pullback(phi: Morphism, psi: Morphism) -> PullbackResult:
    """Pairs (v, w) with phi(v) = psi(w) inside the sup-product."""
    if phi.target != psi.target:
        raise DiagramError("pullback needs a common codomain")
    M, N, Q = phi.source, psi.source, phi.target
    space = M.space
    ambient, slices = ell_inf_product([M, N])
    constraints = []
    for a in range(space.n_atoms):
        C = np.zeros((Q.fibers[a].dim, ambient.fibers[a].dim))
        C[:, slices[a][0]] = phi.mats[a]
        C[:, slices[a][1]] = -psi.mats[a]
        constraints.append(C)
    sub, bases = _embedded_submodule(ambient, constraints)
    p_M = _basis_leg(sub, M, bases, [slices[a][0] for a in range(space.n_atoms)])
    p_N = _basis_leg(sub, N, bases, [slices[a][1] for a in range(space.n_atoms)])
    cat = cospan_category()
    diagram = Diagram(cat, {"X": M, "Y": N, "Z": Q},
                      {"id_X": identity(M), "id_Y": identity(N), "id_Z": identity(Q),
                       "f": phi, "g": psi})
    legs = {"X": p_M, "Y": p_N, "Z": compose(phi, p_M)}
    data = LimitData(diagram, sub, legs, "pullback", ambient, ("X", "Y"), bases)
    return PullbackResult(sub, p_M, p_N, data)


# ---------------------------------------------------------------------------
# inverse limits over finite directed posets


@dataclass(frozen=True, eq=False)
class InverseSystem:
    """Modules M_i with bonding maps P_ij : M_j -> M_i for i <= j."""

    elements: tuple
    leq: frozenset
    modules: dict
    maps: dict
    validate_tol: float = VALIDATE_TOL

    def __post_init__(self):
        elements = tuple(self.elements)
        rel = frozenset((a, b) for a, b in self.leq) | frozenset((x, x) for x in elements)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "leq", rel)
        for a, b in rel:
            if a not in elements or b not in elements:
                raise DiagramError("relation mentions unknown elements")
        for a, b in rel:
            for c, d in rel:
                if b == c and (a, d) not in rel:
                    raise DiagramError("relation is not transitive")
        # directedness
        for a in elements:
            for b in elements:
                if not any((a, u) in rel and (b, u) in rel for u in elements):
                    raise DiagramError(f"elements {a!r}, {b!r} have no upper bound")
        maps = dict(self.maps)
        for (i, j) in rel:
            if i == j:
                maps.setdefault((i, i), identity(self.modules[i]))
            elif (i, j) not in maps:
                raise DiagramError(f"missing bonding map for {i!r} <= {j!r}")
        for (i, j), P in maps.items():
            if P.source != self.modules[j] or P.target != self.modules[i]:
                raise DiagramError(f"bonding map for {(i, j)!r} has wrong endpoints")
        object.__setattr__(self, "maps", maps)
        for (i, j) in rel:
            if residual(maps[(i, i)], identity(self.modules[i])) > self.validate_tol:
                raise DiagramError("P_ii must be the identity")
        for (i, j) in rel:
            for (j2, k) in rel:
                if j == j2 and (i, k) in rel:
                    lhs = compose(maps[(i, j)], maps[(j, k)])
                    if residual(lhs, maps[(i, k)]) > self.validate_tol:
                        raise DiagramError(f"bonding maps do not compose on {i!r}<={j!r}<={k!r}")

    @cached_property
    def maximum(self):
        for m in self.elements:
            if all((x, m) in self.leq for x in self.elements):
                return m
        raise DiagramError("finite directed poset has no maximum; relation is inconsistent")

    def diagram(self) -> Diagram:
        """The associated functor from the opposite poset category.

        The arrow named le_i_j runs j -> i after dualising and carries
        the bonding map P_ij.
        """
        cat = opposite_category(poset_category(self.elements, self.leq))
        on_obj = {str(x): self.modules[x] for x in self.elements}
        on_mor = {}
        for x in self.elements:
            on_mor[f"id_{x}"] = identity(self.modules[x])
        for (i, j) in self.leq:
            if i != j:
                on_mor[f"le_{i}_{j}"] = self.maps[(i, j)]
        return Diagram(cat, on_obj, on_mor, self.validate_tol)


def inverse_limit(system: InverseSystem) -> LimitData:
    """Threads of the system inside the sup-product, norm the sup of levels."""
    elements = system.elements
    mods = [system.modules[x] for x in elements]
    space = mods[0].space
    ambient, slices = ell_inf_product(mods) if len(mods) > 1 else (mods[0], None)
    if slices is None:
        slices = [[slice(0, mods[0].fibers[a].dim)] for a in range(space.n_atoms)]
    pos = {x: i for i, x in enumerate(elements)}
    pairs = [(i, j) for (i, j) in system.leq if i != j]
    constraints = []
    for a in range(space.n_atoms):
        rows = []
        for (i, j) in pairs:
            P = system.maps[(i, j)].mats[a]
            row = np.zeros((P.shape[0], ambient.fibers[a].dim))
            row[:, slices[a][pos[j]]] = P
            row[:, slices[a][pos[i]]] -= np.eye(P.shape[0])
            rows.append(row)
        constraints.append(np.vstack(rows) if rows else np.zeros((0, ambient.fibers[a].dim)))
    sub, bases = _embedded_submodule(ambient, constraints)
    diagram = system.diagram()
    legs = {}
    for x in elements:
        legs[str(x)] = _basis_leg(sub, system.modules[x], bases,
                                  [slices[a][pos[x]] for a in range(space.n_atoms)])
    return LimitData(diagram, sub, legs, "inverse-limit", ambient,
                     tuple(str(x) for x in elements), bases)


# ---------------------------------------------------------------------------
# the generic limit engine


def limit_of_diagram(D: Diagram) -> LimitData:
    """Limit as the equaliser of the two comparison maps between products.

    Follows the product/equaliser factorisation: Y is the product over
    objects, Z the product over all morphisms of the codomain modules,
    and the apex is the kernel of the halved difference of the two
    comparison maps.
    """
    objs = D.index.objects
    if not objs:
        raise DiagramError("empty index category")
    space = D.on_objects[objs[0]].space
    mods = [D.on_objects[x] for x in objs]
    Y, y_slices = ell_inf_product(mods) if len(mods) > 1 else (mods[0], None)
    if y_slices is None:
        y_slices = [[slice(0, mods[0].fibers[a].dim)] for a in range(space.n_atoms)]
    pos = {x: i for i, x in enumerate(objs)}
    mors = D.index.morphisms
    constraints = []
    for a in range(space.n_atoms):
        rows = []
        for m in mors:
            phi = D.on_morphisms[m.ident]
            e = phi.mats[a].shape[0]
            arow = np.zeros((e, Y.fibers[a].dim))
            arow[:, y_slices[a][pos[m.cod]]] = np.eye(e)
            brow = np.zeros((e, Y.fibers[a].dim))
            brow[:, y_slices[a][pos[m.dom]]] = phi.mats[a]
            rows.append((arow - brow) / 2.0)
        constraints.append(np.vstack(rows) if rows else np.zeros((0, Y.fibers[a].dim)))
    sub, bases = _embedded_submodule(Y, constraints)
    legs = {}
    for x in objs:
        legs[x] = _basis_leg(sub, D.on_objects[x], bases,
                             [y_slices[a][pos[x]] for a in range(space.n_atoms)])
    return LimitData(D, sub, legs, "limit-engine", Y, objs, bases)
