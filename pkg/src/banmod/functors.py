"""Hom-modules, duals, hom-functors, the inverse image functor along a
measure-space morphism, and natural transformations with their
objectwise kernels and cokernels.

Hom(M, N) is realised per atom as the space of matrices (flattened
row-major) with the induced operator norm between the fiber norms.  The
inverse image along tau copies fibers, vectors and matrices from the
atom tau(x); since fibers are finite dimensional, the submodule
generated by the lifted elements is the whole module, so no completion
step is needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .limits import Diagram, DiagramError
from .measure import MeasMorphism, MeasureSpace, product_space, projection_to_second
from .modcat import (
    Element,
    ModuleObj,
    Morphism,
    compose,
    free_module,
    identity,
    make_module,
    residual,
)
from .colimits import cokernel, CokernelResult
from .norms import OpNormOf, null_space


class FunctorError(ValueError):
    pass


def free_rank_one(space: MeasureSpace) -> ModuleObj:
    """The ring of functions viewed as the free rank-one module."""
    return free_module(space, 1, p=2)


def hom_module(M: ModuleObj, N: ModuleObj) -> ModuleObj:
    """Module of matrix families with the pointwise operator norm."""
    if M.space != N.space:
        raise FunctorError("hom requires modules over the same space")
    fibers = []
    for fm, fn in zip(M.fibers, N.fibers):
        fibers.append((fm.dim * fn.dim, OpNormOf(fm.norm, fn.norm)))
    return make_module(M.space, fibers)


def dual(M: ModuleObj) -> ModuleObj:
    return hom_module(M, free_rank_one(M.space))


def morphism_to_element(phi: Morphism, hom: ModuleObj | None = None) -> Element:
    """Flatten a morphism's matrices into the hom-module."""
    hom = hom if hom is not None else hom_module(phi.source, phi.target)
    return Element(hom, tuple(A.reshape(-1) for A in phi.mats))


def element_to_mats(v: Element, M: ModuleObj, N: ModuleObj) -> tuple[np.ndarray, ...]:
    return tuple(
        x.reshape(fn.dim, fm.dim) for x, fm, fn in zip(v.vectors, M.fibers, N.fibers)
    )


def hom_post(M: ModuleObj, phi: Morphism) -> Morphism:
    """Hom(M, -) on a morphism: postcomposition T -> phi . T."""
    src = hom_module(M, phi.source)
    tgt = hom_module(M, phi.target)
    mats = []
    for a, fm in enumerate(M.fibers):
        mats.append(np.kron(phi.mats[a], np.eye(fm.dim)))
    return Morphism(src, tgt, tuple(mats), norm_bounds=phi.norm_bounds,
                    norm_exact=tuple(False for _ in phi.norm_bounds))


def hom_pre(N: ModuleObj, phi: Morphism) -> Morphism:
    """Hom(-, N) on a morphism: precomposition T -> T . phi."""
    src = hom_module(phi.target, N)
    tgt = hom_module(phi.source, N)
    mats = []
    for a, fn in enumerate(N.fibers):
        mats.append(np.kron(np.eye(fn.dim), phi.mats[a].T))
    return Morphism(src, tgt, tuple(mats), norm_bounds=phi.norm_bounds,
                    norm_exact=tuple(False for _ in phi.norm_bounds))


def adjoint(phi: Morphism) -> Morphism:
    """Dual functor on morphisms: precomposition on functionals."""
    return hom_pre(free_rank_one(phi.source.space), phi)


# ---------------------------------------------------------------------------
# inverse image


@dataclass(frozen=True, eq=False)
class InvImResult:
    tau: MeasMorphism
    source: ModuleObj  # the module over the target space being pulled back
    module: ModuleObj  # the pulled-back module over the source space

    def lift(self, v: Element) -> Element:
        """tau^* on elements: copy the vector over tau(x) to x."""
        if v.module != self.source:
            raise FunctorError("element does not live in the pulled-back module's source")
        vectors = tuple(v.vectors[self.tau.target_index(pos)]
                        for pos in range(self.tau.source.n_atoms))
        return Element(self.module, vectors)


def inverse_image(tau: MeasMorphism, M: ModuleObj) -> InvImResult:
    """Pull back a module along tau: fiber at x is M's fiber at tau(x)."""
    if M.space != tau.target:
        raise FunctorError("module does not live over the morphism's target")
    fibers = []
    for pos in range(tau.source.n_atoms):
        f = M.fibers[tau.target_index(pos)]
        fibers.append((f.dim, f.norm))
    return InvImResult(tau, M, make_module(tau.source, fibers))


def inverse_image_morphism(tau: MeasMorphism, phi: Morphism) -> Morphism:
    """tau^* on morphisms: copy the matrix over tau(x) to x."""
    src = inverse_image(tau, phi.source).module
    tgt = inverse_image(tau, phi.target).module
    idxs = [tau.target_index(pos) for pos in range(tau.source.n_atoms)]
    mats = tuple(phi.mats[i] for i in idxs)
    return Morphism(src, tgt, mats,
                    norm_bounds=tuple(phi.norm_bounds[i] for i in idxs),
                    norm_exact=tuple(phi.norm_exact[i] for i in idxs))


def lb_pullback_pair(X: MeasureSpace, M: ModuleObj) -> tuple[InvImResult, MeasMorphism]:
    """The pulled-back module along the projection X x Y -> Y.

    Structurally identical to the function-valued module over the product
    (fiber for fiber), realising the constant lift as the canonical one.
    """
    pi = projection_to_second(X, M.space)
    return inverse_image(pi, M), pi


# ---------------------------------------------------------------------------
# natural transformations


@dataclass(frozen=True, eq=False)
class NatTrans:
    source: Diagram
    target: Diagram
    components: dict
    validate_tol: float = 1e-9

    def __post_init__(self):
        if self.source.index is not self.target.index and \
                self.source.index.objects != self.target.index.objects:
            raise FunctorError("diagrams have different index categories")
        for x in self.source.index.objects:
            eta = self.components.get(x)
            if eta is None:
                raise FunctorError(f"missing component at {x!r}")
            if eta.source != self.source.on_objects[x] or eta.target != self.target.on_objects[x]:
                raise FunctorError(f"component at {x!r} has wrong endpoints")
        for m in self.source.index.morphisms:
            lhs = compose(self.target.on_morphisms[m.ident], self.components[m.dom])
            rhs = compose(self.components[m.cod], self.source.on_morphisms[m.ident])
            if residual(lhs, rhs) > self.validate_tol:
                raise FunctorError(f"naturality fails at {m.ident!r}")


def nat_kernel(eta: NatTrans) -> tuple[Diagram, NatTrans]:
    """Objectwise kernels with the induced connecting morphisms.

    The connecting morphism over an index arrow is solved on the kernel
    bases; the system is consistent whenever the input is natural, and a
    residual above tolerance signals a functoriality bug upstream.
    """
    from .limits import kernel

    index = eta.source.index
    kers = {x: kernel(eta.components[x]) for x in index.objects}
    on_obj = {x: kers[x].module for x in index.objects}
    on_mor = {}
    for m in index.morphisms:
        Dphi = eta.source.on_morphisms[m.ident]
        Ki = kers[m.dom]
        Kj = kers[m.cod]
        mats = []
        for a in range(eta.source.space.n_atoms):
            rhs = Dphi.mats[a] @ Ki.inclusion.mats[a]
            sol = Kj.inclusion.mats[a].T @ rhs
            if np.max(np.abs(Kj.inclusion.mats[a] @ sol - rhs), initial=0.0) > 1e-7:
                raise FunctorError(f"kernel connecting morphism inconsistent at {m.ident!r}")
            mats.append(sol)
        on_mor[m.ident] = Morphism(
            Ki.module, Kj.module, tuple(mats),
            norm_bounds=tuple(1.0 for _ in mats),
            norm_exact=tuple(False for _ in mats))
    diagram = Diagram(index, on_obj, on_mor)
    inclusion = NatTrans(diagram, eta.source, {x: kers[x].inclusion for x in index.objects})
    return diagram, inclusion


def nat_cokernel(eta: NatTrans) -> tuple[Diagram, NatTrans]:
    """Objectwise cokernels with the induced connecting morphisms."""
    index = eta.source.index
    cokers: dict[str, CokernelResult] = {x: cokernel(eta.components[x]) for x in index.objects}
    on_obj = {x: cokers[x].module for x in index.objects}
    on_mor = {}
    for m in index.morphisms:
        Dphi = eta.target.on_morphisms[m.ident]
        Ci = cokers[m.dom]
        Cj = cokers[m.cod]
        mats = []
        for a in range(eta.source.space.n_atoms):
            lift = Cj.projection.mats[a] @ Dphi.mats[a]
            sol = lift @ Ci.colimit.section[a]
            if np.max(np.abs(sol @ Ci.projection.mats[a] - lift), initial=0.0) > 1e-7:
                raise FunctorError(f"cokernel connecting morphism inconsistent at {m.ident!r}")
            mats.append(sol)
        on_mor[m.ident] = Morphism(
            Ci.module, Cj.module, tuple(mats),
            norm_bounds=tuple(1.0 for _ in mats),
            norm_exact=tuple(False for _ in mats))
    diagram = Diagram(index, on_obj, on_mor)
    projection = NatTrans(eta.target, diagram, {x: cokers[x].projection for x in index.objects})
    return diagram, projection
