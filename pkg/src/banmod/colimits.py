"""Colimit constructions: cokernels, coequalisers, coproducts, pushouts,
direct limits, images/coimages, metric identification, and the generic
finite-diagram colimit engine.

Quotient objects are represented on complement coordinates: per atom a
deterministic pivoted scan picks coordinates completing the relation
subspace, the fiber norm is the quotient norm of the sum-product
ambient evaluated through that embedding, and the projection matrices
are read off the inverse of the completed basis.  Closures are plain
column spaces since finite-dimensional subspaces are closed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .limits import (
    Cocone,
    Diagram,
    DiagramError,
    discrete_category,
    halved_difference,
    opposite_category,
    parallel_pair_category,
    poset_category,
    span_category,
)
from .modcat import (
    ModuleObj,
    Morphism,
    compose,
    identity,
    make_module,
    residual,
    zero_morphism,
)
from .norms import (
    ComposeLinear,
    QuotientOf,
    SumOf,
    column_space,
    complement_coords,
    lp,
    matrix_rank,
    null_space,
    seminorm_kernel,
)


@dataclass(frozen=True, eq=False)
class ColimitData:
    """A constructed colimit cocone plus the data the mediator formula needs."""

    diagram: Diagram
    nadir: ModuleObj
    legs: dict
    kind: str
    ambient: ModuleObj
    obj_order: tuple
    section: tuple | None  # per atom, ambient_dim x nadir_dim; None = nadir is the ambient

    @property
    def cocone(self) -> Cocone:
        return Cocone(self.diagram, self.nadir, self.legs)


def ell_1_coproduct(Ms) -> tuple[ModuleObj, list]:
    """Sum-normed concatenation; returns the module and per-atom block slices."""
    Ms = list(Ms)
    if not Ms:
        raise DiagramError("empty coproduct ambient")
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
        fibers.append((int(offs[-1]), SumOf(parts)))
    return make_module(space, fibers), slices


def coproduct(Ms, index_names=None) -> ColimitData:
    """Finite coproduct with isometric coordinate injections."""
    Ms = list(Ms)
    names = tuple(index_names) if index_names is not None else tuple(str(i) for i in range(len(Ms)))
    if len(names) != len(Ms):
        raise DiagramError("one name per summand required")
    if not Ms:
        raise DiagramError("coproduct of an empty family is not supported")
    space = Ms[0].space
    cat = discrete_category(names)
    diagram = Diagram(cat, {n: M for n, M in zip(names, Ms)},
                      {f"id_{n}": identity(M) for n, M in zip(names, Ms)})
    if len(Ms) == 1:
        nadir = Ms[0]
        legs = {names[0]: identity(Ms[0])}
        return ColimitData(diagram, nadir, legs, "coproduct", nadir, names, None)
    nadir, slices = ell_1_coproduct(Ms)
    legs = {}
    for i, (n, M) in enumerate(zip(names, Ms)):
        mats = []
        for a in range(space.n_atoms):
            sl = slices[a][i]
            mat = np.zeros((nadir.fibers[a].dim, M.fibers[a].dim))
            mat[sl, :] = np.eye(M.fibers[a].dim)
            mats.append(mat)
        legs[n] = Morphism(M, nadir, tuple(mats),
                           norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                           norm_exact=tuple(False for _ in range(space.n_atoms)))
    return ColimitData(diagram, nadir, legs, "coproduct", nadir, names, None)


def _quotient_module(ambient: ModuleObj, relation_mats) -> tuple[ModuleObj, tuple, tuple]:
    """Quotient of the ambient by per-atom relation subspaces.

    Returns (module, projections P_a, sections E_a) with the fiber norm
    the quotient norm evaluated through the complement embedding.
    """
    projections = []
    sections = []
    fibers = []
    for a, fib in enumerate(ambient.fibers):
        S = column_space(np.asarray(relation_mats[a], dtype=float))
        idx, E, P = complement_coords(S)
        c = len(idx)
        projections.append(P)
        sections.append(E)
        if c == 0:
            fibers.append((0, lp(2, 0)))
        elif S.shape[1] == 0:
            fibers.append((fib.dim, fib.norm))
        else:
            fibers.append((c, ComposeLinear(E, QuotientOf(fib.norm, S))))
    return make_module(ambient.space, fibers), tuple(projections), tuple(sections)


@dataclass(frozen=True, eq=False)
class CokernelResult:
    module: ModuleObj
    projection: Morphism
    colimit: ColimitData


def cokernel(phi: Morphism) -> CokernelResult:
    """Target modulo the closed range, with the canonical projection."""
    M, N = phi.source, phi.target
    space = M.space
    quot, projections, sections = _quotient_module(N, phi.mats)
    proj = Morphism(N, quot, projections,
                    norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                    norm_exact=tuple(False for _ in range(space.n_atoms)))
    cat = parallel_pair_category()
    diagram = Diagram(cat, {"X": M, "Y": N},
                      {"id_X": identity(M), "id_Y": identity(N),
                       "a": phi, "b": zero_morphism(M, N)})
    legs = {"X": compose(proj, phi), "Y": proj}
    data = ColimitData(diagram, quot, legs, "cokernel", N, ("Y",), sections)
    return CokernelResult(quot, proj, data)


@dataclass(frozen=True, eq=False)
class CoequalizerResult:
    module: ModuleObj
    projection: Morphism
    colimit: ColimitData


def coequalizer(phi: Morphism, psi: Morphism) -> CoequalizerResult:
    coker = cokernel(halved_difference(phi, psi))
    M, N = phi.source, phi.target
    cat = parallel_pair_category()
    diagram = Diagram(cat, {"X": M, "Y": N},
                      {"id_X": identity(M), "id_Y": identity(N), "a": phi, "b": psi})
    legs = {"X": compose(coker.projection, phi), "Y": coker.projection}
    data = ColimitData(diagram, coker.module, legs, "coequalizer", N, ("Y",),
                       coker.colimit.section)
    return CoequalizerResult(coker.module, coker.projection, data)


@dataclass(frozen=True, eq=False)
class PushoutResult:
    module: ModuleObj
    from_first: Morphism
    from_second: Morphism
    colimit: ColimitData


def pushout(phi: Morphism, psi: Morphism) -> PushoutResult:
    """Sum-product modulo the antidiagonal relation subspace."""
    if phi.source != psi.source:
        raise DiagramError("pushout needs a common domain")
    Q, M, N = phi.source, phi.target, psi.target
    space = Q.space
    ambient, slices = ell_1_coproduct([M, N])
    relations = []
    for a in range(space.n_atoms):
        R = np.zeros((ambient.fibers[a].dim, Q.fibers[a].dim))
        R[slices[a][0], :] = -phi.mats[a]
        R[slices[a][1], :] = psi.mats[a]
        relations.append(R)
    quot, projections, sections = _quotient_module(ambient, relations)
    i_M = Morphism(M, quot, tuple(projections[a][:, slices[a][0]] for a in range(space.n_atoms)),
                   norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                   norm_exact=tuple(False for _ in range(space.n_atoms)))
    i_N = Morphism(N, quot, tuple(projections[a][:, slices[a][1]] for a in range(space.n_atoms)),
                   norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                   norm_exact=tuple(False for _ in range(space.n_atoms)))
    cat = span_category()
    diagram = Diagram(cat, {"X": M, "Y": N, "Q": Q},
                      {"id_X": identity(M), "id_Y": identity(N), "id_Q": identity(Q),
                       "f": phi, "g": psi})
    legs = {"X": i_M, "Y": i_N, "Q": compose(i_M, phi)}
    data = ColimitData(diagram, quot, legs, "pushout", ambient, ("X", "Y"), sections)
    return PushoutResult(quot, i_M, i_N, data)


# ---------------------------------------------------------------------------
# direct limits over finite directed posets


@dataclass(frozen=True, eq=False)
class DirectSystem:
    """Modules M_i with connecting maps phi_ij : M_i -> M_j for i <= j."""

    elements: tuple
    leq: frozenset
    modules: dict
    maps: dict
    validate_tol: float = 1e-9

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
        for a in elements:
            for b in elements:
                if not any((a, u) in rel and (b, u) in rel for u in elements):
                    raise DiagramError(f"elements {a!r}, {b!r} have no upper bound")
        maps = dict(self.maps)
        for (i, j) in rel:
            if i == j:
                maps.setdefault((i, i), identity(self.modules[i]))
            elif (i, j) not in maps:
                raise DiagramError(f"missing connecting map for {i!r} <= {j!r}")
        for (i, j), f in maps.items():
            if f.source != self.modules[i] or f.target != self.modules[j]:
                raise DiagramError(f"connecting map for {(i, j)!r} has wrong endpoints")
        object.__setattr__(self, "maps", maps)
        for (i, j) in rel:
            for (j2, k) in rel:
                if j == j2 and (i, k) in rel:
                    lhs = compose(maps[(j, k)], maps[(i, j)])
                    if residual(lhs, maps[(i, k)]) > self.validate_tol:
                        raise DiagramError(f"connecting maps do not compose on {i!r}<={j!r}<={k!r}")

    @property
    def maximum(self):
        for m in self.elements:
            if all((x, m) in self.leq for x in self.elements):
                return m
        raise DiagramError("finite directed poset has no maximum; relation is inconsistent")

    def diagram(self) -> Diagram:
        cat = poset_category(self.elements, self.leq)
        on_obj = {str(x): self.modules[x] for x in self.elements}
        on_mor = {}
        for x in self.elements:
            on_mor[f"id_{x}"] = identity(self.modules[x])
        for (i, j) in self.leq:
            if i != j:
                on_mor[f"le_{i}_{j}"] = self.maps[(i, j)]
        return Diagram(cat, on_obj, on_mor, self.validate_tol)


def direct_limit(system: DirectSystem) -> ColimitData:
    """Algebraic colimit with the representative-infimum seminorm.

    The seminorm of a class is the infimum of level norms over all of
    its representatives; with a finite directed index the top level
    realises it, so the fiber norm is the top-level quotient norm read
    through the minimum-norm representative map.  Metric identification
    is a no-op here because genuine fiber norms stay genuine.
    """
    elements = system.elements
    mods = [system.modules[x] for x in elements]
    space = mods[0].space
    ambient, slices = ell_1_coproduct(mods) if len(mods) > 1 else (mods[0], None)
    if slices is None:
        slices = [[slice(0, mods[0].fibers[a].dim)] for a in range(space.n_atoms)]
    pos = {x: i for i, x in enumerate(elements)}
    pairs = [(i, j) for (i, j) in system.leq if i != j]
    top = system.maximum

    projections, sections, fibers = [], [], []
    top_solves = []
    for a in range(space.n_atoms):
        cols = []
        for (i, j) in pairs:
            F = system.maps[(i, j)].mats[a]
            col = np.zeros((ambient.fibers[a].dim, F.shape[1]))
            col[slices[a][pos[i]], :] -= np.eye(F.shape[1])
            col[slices[a][pos[j]], :] += F
            cols.append(col)
        R = np.hstack(cols) if cols else np.zeros((ambient.fibers[a].dim, 0))
        S = column_space(R)
        idx, E, P = complement_coords(S)
        c = len(idx)
        projections.append(P)
        sections.append(E)
        A_top = P[:, slices[a][pos[top]]]
        if c and matrix_rank(A_top) != c:
            raise DiagramError("top level does not reach every class; system is inconsistent")
        top_solves.append(np.linalg.pinv(A_top) if c else np.zeros((A_top.shape[1], 0)))
        if c == 0:
            fibers.append((0, lp(2, 0)))
        else:
            n_top = system.modules[top].fibers[a].norm
            S_top = null_space(A_top)
            if S_top.shape[1] == 0 and np.allclose(top_solves[-1] @ A_top, np.eye(A_top.shape[1])):
                fibers.append((c, ComposeLinear(top_solves[-1], n_top)))
            else:
                fibers.append((c, ComposeLinear(top_solves[-1], QuotientOf(n_top, S_top))))
    nadir = make_module(space, fibers)

    # identify away any null directions (no-op for genuine fiber norms)
    kernels = [seminorm_kernel(f.norm) for f in nadir.fibers]
    if any(k.shape[1] for k in kernels):
        ident_module, ident_proj = metric_identification(nadir)
        proj_mats = ident_proj.mats
        nadir = ident_module
        projections = [proj_mats[a] @ projections[a] for a in range(space.n_atoms)]
        sections = [sections[a] @ np.linalg.pinv(proj_mats[a]) for a in range(space.n_atoms)]

    legs = {}
    for x in elements:
        legs[str(x)] = Morphism(
            system.modules[x], nadir,
            tuple(projections[a][:, slices[a][pos[x]]] for a in range(space.n_atoms)),
            norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
            norm_exact=tuple(False for _ in range(space.n_atoms)))
    return ColimitData(system.diagram(), nadir, legs, "direct-limit", ambient,
                       tuple(str(x) for x in elements), tuple(sections))


# ---------------------------------------------------------------------------
# the generic colimit engine


def colimit_of_diagram(D: Diagram) -> ColimitData:
    """Colimit as the coequaliser of the comparison maps between coproducts."""
    objs = D.index.objects
    if not objs:
        raise DiagramError("empty index category")
    space = D.on_objects[objs[0]].space
    mods = [D.on_objects[x] for x in objs]
    Y, y_slices = ell_1_coproduct(mods) if len(mods) > 1 else (mods[0], None)
    if y_slices is None:
        y_slices = [[slice(0, mods[0].fibers[a].dim)] for a in range(space.n_atoms)]
    pos = {x: i for i, x in enumerate(objs)}
    mors = D.index.morphisms
    relations = []
    for a in range(space.n_atoms):
        cols = []
        for m in mors:
            phi = D.on_morphisms[m.ident]
            d = phi.mats[a].shape[1]
            col = np.zeros((Y.fibers[a].dim, d))
            col[y_slices[a][pos[m.dom]], :] += np.eye(d)
            col[y_slices[a][pos[m.cod]], :] -= phi.mats[a]
            cols.append(col / 2.0)
        relations.append(np.hstack(cols) if cols else np.zeros((Y.fibers[a].dim, 0)))
    quot, projections, sections = _quotient_module(Y, relations)
    legs = {}
    for x in objs:
        legs[x] = Morphism(
            D.on_objects[x], quot,
            tuple(projections[a][:, y_slices[a][pos[x]]] for a in range(space.n_atoms)),
            norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
            norm_exact=tuple(False for _ in range(space.n_atoms)))
    return ColimitData(D, quot, legs, "colimit-engine", Y, objs, sections)


# ---------------------------------------------------------------------------
# images, coimages, metric identification, completion


@dataclass(frozen=True, eq=False)
class ImageResult:
    module: ModuleObj
    mono: Morphism  # induced injection into the target
    epi: Morphism   # projection of the source onto the image


def image(phi: Morphism) -> ImageResult:
    """Source modulo kernel, with the induced injection into the target."""
    M, N = phi.source, phi.target
    space = M.space
    quot, projections, sections = _quotient_module(M, tuple(null_space(A) for A in phi.mats))
    epi = Morphism(M, quot, projections,
                   norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                   norm_exact=tuple(False for _ in range(space.n_atoms)))
    mono = Morphism(quot, N, tuple(phi.mats[a] @ sections[a] for a in range(space.n_atoms)),
                    norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                    norm_exact=tuple(False for _ in range(space.n_atoms)))
    return ImageResult(quot, mono, epi)


@dataclass(frozen=True, eq=False)
class CoimageResult:
    module: ModuleObj
    epi: Morphism   # corestriction of the morphism onto its closed range
    mono: Morphism  # inclusion of the range into the target


def coimage(phi: Morphism) -> CoimageResult:
    """Closed range with the restriction norm; closure is a no-op here."""
    M, N = phi.source, phi.target
    space = M.space
    bases = [column_space(A) for A in phi.mats]
    fibers = []
    for a, B in enumerate(bases):
        if B.shape[1] == 0:
            fibers.append((0, lp(2, 0)))
        else:
            fibers.append((B.shape[1], ComposeLinear(B, N.fibers[a].norm)))
    rng_mod = make_module(space, fibers)
    epi = Morphism(M, rng_mod, tuple(bases[a].T @ phi.mats[a] for a in range(space.n_atoms)),
                   norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                   norm_exact=tuple(False for _ in range(space.n_atoms)))
    mono = Morphism(rng_mod, N, tuple(bases),
                    norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                    norm_exact=tuple(False for _ in range(space.n_atoms)))
    return CoimageResult(rng_mod, epi, mono)


def metric_identification(M: ModuleObj) -> tuple[ModuleObj, Morphism]:
    """Quotient by the per-atom null subspace of a seminormed module."""
    space = M.space
    kernels = [seminorm_kernel(f.norm) for f in M.fibers]
    if all(k.shape[1] == 0 for k in kernels):
        return M, identity(M)
    projections, fibers = [], []
    for a, fib in enumerate(M.fibers):
        Z = kernels[a]
        if Z.shape[1] == 0:
            projections.append(np.eye(fib.dim))
            fibers.append((fib.dim, fib.norm))
            continue
        idx, E, P = complement_coords(Z)
        projections.append(P)
        if len(idx) == 0:
            fibers.append((0, lp(2, 0)))
        else:
            # the seminorm is constant on cosets of its kernel, so the
            # embedding restriction is already the quotient norm
            fibers.append((len(idx), ComposeLinear(E, fib.norm)))
    quot = make_module(space, fibers)
    proj = Morphism(M, quot, tuple(projections),
                    norm_bounds=tuple(1.0 for _ in range(space.n_atoms)),
                    norm_exact=tuple(False for _ in range(space.n_atoms)))
    return quot, proj


def completion(M: ModuleObj) -> tuple[ModuleObj, Morphism]:
    """Completion is the identity on finite-dimensional genuine-norm fibers."""
    for a, fib in enumerate(M.fibers):
        if seminorm_kernel(fib.norm).shape[1]:
            raise DiagramError(
                f"fiber at atom {M.space.ids[a]!r} carries a seminorm; identify first")
    return M, identity(M)
