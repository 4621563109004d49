"""Randomized verification of universal properties, isometric-isomorphism
checks, fault injection, and the truncated counterexample demos.

Audits are deterministic: every random draw flows from a SeedSequence
over (seed, trial index), so trial-level parallelism cannot change a
report.  Uniqueness of mediating morphisms is certified structurally,
by joint injectivity of limit legs (respectively joint surjectivity of
colimit legs) per atom, which is exactly what uniqueness means for
per-atom-linear mediators.

The trend demos reproduce, level by level, the exact finite truncations
of the known infinite-index phenomena (a mono+epi non-isomorphism, a
trivial inverse limit, and the two one-sided exactness failures); the
infinite-dimensional conclusions themselves are reported as verdicts,
never asserted as computations.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .colimits import (
    ColimitData,
    DirectSystem,
    coequalizer,
    cokernel,
    colimit_of_diagram,
    coproduct,
    direct_limit,
    pushout,
)
from .functors import (
    NatTrans,
    adjoint,
    dual,
    hom_module,
    hom_post,
    inverse_image,
    inverse_image_morphism,
    lb_pullback_pair,
)
from .limits import (
    Cocone,
    Cone,
    Diagram,
    InverseSystem,
    LimitData,
    cospan_category,
    discrete_category,
    equalizer,
    inverse_limit,
    kernel,
    limit_of_diagram,
    parallel_pair_category,
    poset_category,
    product,
    pullback,
    span_category,
)
from .measure import MeasMorphism, MeasureSpace, dirac_point
from .modcat import (
    Element,
    ModuleObj,
    Morphism,
    compose,
    free_module,
    identity,
    is_epi,
    is_mono,
    is_morphism,
    lb_constant,
    lb_module,
    make_module,
    zero_morphism,
)
from .norms import INF, eval_norm, lp, matrix_rank, op_norm

MORPH_TOL = 1e-6
COMM_TOL = 1e-9


# ---------------------------------------------------------------------------
# reports


@dataclass
class AuditReport:
    construction: str
    trials: int
    seed: int
    tol: float
    max_residual: float
    uniqueness_ok: bool
    passed: bool
    failures: list = field(default_factory=list)
    trial_diagnostics: list = field(default_factory=list)
    wall_time_s: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "audit",
            "construction": self.construction,
            "trials": self.trials,
            "seed": self.seed,
            "tol": self.tol,
            "max_residual": self.max_residual,
            "uniqueness_ok": self.uniqueness_ok,
            "passed": self.passed,
            "failures": self.failures,
            "trial_diagnostics": self.trial_diagnostics,
        }


@dataclass
class TrendReport:
    name: str
    levels: list
    values: list
    monotone: bool
    verdict: str
    notes: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "trend",
            "name": self.name,
            "levels": self.levels,
            "values": self.values,
            "monotone": self.monotone,
            "verdict": self.verdict,
            "notes": self.notes,
        }


# ---------------------------------------------------------------------------
# deterministic randomness and instance generation


@dataclass(frozen=True)
class InstanceConfig:
    max_atoms: int = 4
    max_dim: int = 4
    min_dim: int = 1
    ps: tuple = (1, 2, INF)


def rng_for(seed: int, *path) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(p) for p in path)))


def random_space(rng, cfg: InstanceConfig) -> MeasureSpace:
    n = int(rng.integers(1, cfg.max_atoms + 1))
    ids = tuple(f"a{k}" for k in range(n))
    masses = tuple(float(m) for m in rng.uniform(0.25, 4.0, size=n))
    return MeasureSpace(ids, masses)


def random_module(rng, space: MeasureSpace, cfg: InstanceConfig) -> ModuleObj:
    fibers = []
    for _ in range(space.n_atoms):
        d = int(rng.integers(cfg.min_dim, cfg.max_dim + 1))
        p = cfg.ps[int(rng.integers(0, len(cfg.ps)))]
        fibers.append((d, lp(p, d)))
    return make_module(space, fibers)


def random_morphism(rng, M: ModuleObj, N: ModuleObj) -> Morphism:
    """Random matrices divided per atom by their operator norm, times u <= 1."""
    mats, bounds = [], []
    for fs, ft in zip(M.fibers, N.fibers):
        A = rng.standard_normal((ft.dim, fs.dim))
        u = float(rng.uniform(0.3, 0.98))
        if A.size:
            nrm = op_norm(A, fs.norm, ft.norm).value
            if nrm > 0:
                A = A * (u / nrm)
        mats.append(A)
        bounds.append(u if A.size else 0.0)
    return Morphism(M, N, tuple(mats), norm_bounds=tuple(bounds),
                    norm_exact=tuple(False for _ in bounds))


def random_meas_morphism(rng, X: MeasureSpace, Y: MeasureSpace) -> MeasMorphism:
    picks = rng.integers(0, Y.n_atoms, size=X.n_atoms)
    return MeasMorphism(X, Y, tuple((a, Y.ids[int(j)]) for a, j in zip(X.ids, picks)))


def random_directed_relation(rng, elements) -> frozenset:
    """Random reflexive-transitive directed relation on totally ordered labels."""
    rel = {(x, x) for x in elements}
    for i, a in enumerate(elements):
        for b in elements[i + 1:]:
            if rng.random() < 0.5:
                rel.add((a, b))
    changed = True
    while changed:
        changed = False
        for (a, b) in list(rel):
            for (c, d) in list(rel):
                if b == c and (a, d) not in rel:
                    rel.add((a, d))
                    changed = True
    def directed(r):
        return all(any((a, u) in r and (b, u) in r for u in elements)
                   for a in elements for b in elements)
    if not directed(rel):
        top = elements[-1]
        for a in elements:
            rel.add((a, top))
        # re-close
        for (a, b) in list(rel):
            for (c, d) in list(rel):
                if b == c:
                    rel.add((a, d))
    return frozenset(rel)


def _levels(elements, rel) -> dict:
    lev = {x: 0 for x in elements}
    changed = True
    while changed:
        changed = False
        for (a, b) in rel:
            if a != b and lev[b] < lev[a] + 1:
                lev[b] = lev[a] + 1
                changed = True
    return lev


def _pinv_system_mats(rng, space, cfg, elements, rel, direct: bool):
    """Consistent bonding maps P = T_i pinv(T_j) scaled to norm below one.

    A shared factor space of dimension D_a per atom forces all squares to
    commute; a level potential rescales every map under norm one.
    """
    lev = _levels(elements, rel)
    dims, base = {}, []
    for a in range(space.n_atoms):
        D = int(rng.integers(0, cfg.max_dim))
        base.append(D)
        for x in elements:
            dims.setdefault(x, []).append(int(rng.integers(max(D, cfg.min_dim), cfg.max_dim + 1)))
    modules = {}
    for x in elements:
        fibers = []
        for a in range(space.n_atoms):
            p = cfg.ps[int(rng.integers(0, len(cfg.ps)))]
            fibers.append((dims[x][a], lp(p, dims[x][a])))
        modules[x] = make_module(space, fibers)
    T = {x: [rng.standard_normal((dims[x][a], base[a])) for a in range(space.n_atoms)]
         for x in elements}
    pairs = [(i, j) for (i, j) in rel if i != j]

    def raw_map(i, j, a):
        # inverse systems: M_j -> M_i; direct systems: M_i -> M_j
        if direct:
            return T[j][a] @ np.linalg.pinv(T[i][a])
        return T[i][a] @ np.linalg.pinv(T[j][a])

    beta = 1.0
    for (i, j) in pairs:
        delta = max(lev[j] - lev[i], 1)
        for a in range(space.n_atoms):
            A = raw_map(i, j, a)
            if not A.size or not np.any(A):
                continue
            if direct:
                nrm = op_norm(A, modules[i].fibers[a].norm, modules[j].fibers[a].norm).value
            else:
                nrm = op_norm(A, modules[j].fibers[a].norm, modules[i].fibers[a].norm).value
            beta = max(beta, nrm ** (1.0 / delta))
    gamma = beta / float(rng.uniform(0.7, 0.95))
    for x in elements:
        s = gamma ** (-lev[x] if direct else lev[x])
        T[x] = [t * s for t in T[x]]
    maps = {}
    for (i, j) in pairs:
        mats = tuple(raw_map(i, j, a) for a in range(space.n_atoms))
        if direct:
            maps[(i, j)] = Morphism(modules[i], modules[j], mats)
        else:
            maps[(i, j)] = Morphism(modules[j], modules[i], mats)
    return modules, maps


def random_inverse_system(rng, cfg: InstanceConfig, n_elems: int) -> InverseSystem:
    space = random_space(rng, cfg)
    elements = tuple(range(1, n_elems + 1))
    rel = random_directed_relation(rng, elements)
    modules, maps = _pinv_system_mats(rng, space, cfg, elements, rel, direct=False)
    return InverseSystem(elements, rel, modules, maps)


def random_direct_system(rng, cfg: InstanceConfig, n_elems: int) -> DirectSystem:
    space = random_space(rng, cfg)
    elements = tuple(range(1, n_elems + 1))
    rel = random_directed_relation(rng, elements)
    modules, maps = _pinv_system_mats(rng, space, cfg, elements, rel, direct=True)
    return DirectSystem(elements, rel, modules, maps)


DIAGRAM_SHAPES = ("discrete2", "discrete3", "parallel", "cospan", "span", "chain3")


def random_diagram(rng, cfg: InstanceConfig, shape: str) -> Diagram:
    space = random_space(rng, cfg)
    if shape.startswith("discrete"):
        k = int(shape[-1])
        names = tuple(f"D{i}" for i in range(k))
        cat = discrete_category(names)
        objs = {n: random_module(rng, space, cfg) for n in names}
        mors = {f"id_{n}": identity(objs[n]) for n in names}
        return Diagram(cat, objs, mors)
    if shape == "parallel":
        cat = parallel_pair_category()
        M = random_module(rng, space, cfg)
        N = random_module(rng, space, cfg)
        return Diagram(cat, {"X": M, "Y": N},
                       {"id_X": identity(M), "id_Y": identity(N),
                        "a": random_morphism(rng, M, N), "b": random_morphism(rng, M, N)})
    if shape == "cospan":
        cat = cospan_category()
        M, N, Q = (random_module(rng, space, cfg) for _ in range(3))
        return Diagram(cat, {"X": M, "Y": N, "Z": Q},
                       {"id_X": identity(M), "id_Y": identity(N), "id_Z": identity(Q),
                        "f": random_morphism(rng, M, Q), "g": random_morphism(rng, N, Q)})
    if shape == "span":
        cat = span_category()
        M, N, Q = (random_module(rng, space, cfg) for _ in range(3))
        return Diagram(cat, {"X": M, "Y": N, "Q": Q},
                       {"id_X": identity(M), "id_Y": identity(N), "id_Q": identity(Q),
                        "f": random_morphism(rng, Q, M), "g": random_morphism(rng, Q, N)})
    if shape == "chain3":
        names = ("0", "1", "2")
        cat = poset_category(names, {("0", "1"), ("1", "2"), ("0", "2")})
        objs = {n: random_module(rng, space, cfg) for n in names}
        f01 = random_morphism(rng, objs["0"], objs["1"])
        f12 = random_morphism(rng, objs["1"], objs["2"])
        mors = {f"id_{n}": identity(objs[n]) for n in names}
        mors["le_0_1"] = f01
        mors["le_1_2"] = f12
        mors["le_0_2"] = compose(f12, f01)
        return Diagram(cat, objs, mors)
    raise ValueError(f"unknown shape {shape!r}")


# ---------------------------------------------------------------------------
# random cones and cocones


def _vec_len(module: ModuleObj, a: int) -> int:
    return module.fibers[a].dim


def random_cone(rng, diagram: Diagram, cfg: InstanceConfig) -> Cone:
    """Random legs projected onto the cone equations, scaled under norm one."""
    space = diagram.space
    apex = random_module(rng, space, cfg)
    objs = diagram.index.objects
    legs_mats = {x: [] for x in objs}
    for a in range(space.n_atoms):
        s = apex.fibers[a].dim
        sizes = {x: _vec_len(diagram.on_objects[x], a) * s for x in objs}
        offs, total = {}, 0
        for x in objs:
            offs[x] = total
            total += sizes[x]
        rows = []
        for m in diagram.index.nonidentity:
            D = diagram.on_morphisms[m.ident].mats[a]
            e_dom = diagram.on_objects[m.dom].fibers[a].dim
            e_cod = diagram.on_objects[m.cod].fibers[a].dim
            row = np.zeros((e_cod * s, total))
            if sizes[m.dom]:
                row[:, offs[m.dom]:offs[m.dom] + sizes[m.dom]] = np.kron(D, np.eye(s))
            if sizes[m.cod]:
                row[:, offs[m.cod]:offs[m.cod] + sizes[m.cod]] -= np.eye(e_cod * s)
            rows.append(row)
        if rows and total:
            from .norms import null_space

            K = null_space(np.vstack(rows))
            z = K @ (K.T @ rng.standard_normal(total)) if K.shape[1] else np.zeros(total)
        else:
            z = rng.standard_normal(total) if total else np.zeros(0)
        worst = 0.0
        for x in objs:
            e = diagram.on_objects[x].fibers[a].dim
            L = z[offs[x]:offs[x] + sizes[x]].reshape(e, s)
            legs_mats[x].append(L)
            if L.size:
                worst = max(worst, op_norm(L, apex.fibers[a].norm,
                                           diagram.on_objects[x].fibers[a].norm).value)
        u = float(rng.uniform(0.3, 0.95))
        c = u / worst if worst > 0 else 1.0
        for x in objs:
            legs_mats[x][a] = legs_mats[x][a] * c
    legs = {}
    for x in objs:
        legs[x] = Morphism(apex, diagram.on_objects[x], tuple(legs_mats[x]),
                           norm_bounds=tuple(0.95 for _ in range(space.n_atoms)),
                           norm_exact=tuple(False for _ in range(space.n_atoms)))
    return Cone(diagram, apex, legs)


def random_cocone(rng, diagram: Diagram, cfg: InstanceConfig) -> Cocone:
    space = diagram.space
    nadir = random_module(rng, space, cfg)
    objs = diagram.index.objects
    legs_mats = {x: [] for x in objs}
    for a in range(space.n_atoms):
        s = nadir.fibers[a].dim
        sizes = {x: _vec_len(diagram.on_objects[x], a) * s for x in objs}
        offs, total = {}, 0
        for x in objs:
            offs[x] = total
            total += sizes[x]
        rows = []
        for m in diagram.index.nonidentity:
            D = diagram.on_morphisms[m.ident].mats[a]
            row = np.zeros((s * D.shape[1], total))
            if sizes[m.cod]:
                row[:, offs[m.cod]:offs[m.cod] + sizes[m.cod]] = np.kron(np.eye(s), D.T)
            if sizes[m.dom]:
                row[:, offs[m.dom]:offs[m.dom] + sizes[m.dom]] -= np.eye(s * D.shape[1])
            rows.append(row)
        if rows and total:
            from .norms import null_space

            K = null_space(np.vstack(rows))
            z = K @ (K.T @ rng.standard_normal(total)) if K.shape[1] else np.zeros(total)
        else:
            z = rng.standard_normal(total) if total else np.zeros(0)
        worst = 0.0
        for x in objs:
            e = diagram.on_objects[x].fibers[a].dim
            L = z[offs[x]:offs[x] + sizes[x]].reshape(s, e)
            legs_mats[x].append(L)
            if L.size:
                worst = max(worst, op_norm(L, diagram.on_objects[x].fibers[a].norm,
                                           nadir.fibers[a].norm).value)
        u = float(rng.uniform(0.3, 0.95))
        c = u / worst if worst > 0 else 1.0
        for x in objs:
            legs_mats[x][a] = legs_mats[x][a] * c
    legs = {}
    for x in objs:
        legs[x] = Morphism(diagram.on_objects[x], nadir, tuple(legs_mats[x]),
                           norm_bounds=tuple(0.95 for _ in range(space.n_atoms)),
                           norm_exact=tuple(False for _ in range(space.n_atoms)))
    return Cocone(diagram, nadir, legs)


# ---------------------------------------------------------------------------
# mediating morphisms and the universal-property audit


@dataclass(frozen=True, eq=False)
class ClaimedLimit:
    """A cone asserted to be a limit without embedded-basis data."""

    diagram: Diagram
    apex: ModuleObj
    legs: dict


@dataclass(frozen=True, eq=False)
class ClaimedColimit:
    diagram: Diagram
    nadir: ModuleObj
    legs: dict


def mediating_morphism(data, cone: Cone):
    """Mediator from a cone into a limit; returns (matrices, residual).

    Explicit formulas run first: stacked legs for products, basis-solves
    for embedded submodules; the claimed-limit fallback solves the leg
    equations by least squares per atom.
    """
    diagram = data.diagram
    space = diagram.space
    mats = []
    if isinstance(data, LimitData):
        for a in range(space.n_atoms):
            u = _vstack([cone.legs[x].mats[a] for x in data.obj_order],
                        data.ambient.fibers[a].dim, cone.apex.fibers[a].dim)
            mats.append(data.basis[a].T @ u if data.basis is not None else u)
    else:
        for a in range(space.n_atoms):
            rows = _vstack([data.legs[x].mats[a] for x in diagram.index.objects],
                           None, data.apex.fibers[a].dim)
            rhs = _vstack([cone.legs[x].mats[a] for x in diagram.index.objects],
                          None, cone.apex.fibers[a].dim)
            if rows.size == 0 or rows.shape[1] == 0:
                mats.append(np.zeros((data.apex.fibers[a].dim, cone.apex.fibers[a].dim)))
            else:
                sol, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
                mats.append(sol)
    worst = 0.0
    for x in diagram.index.objects:
        for a in range(space.n_atoms):
            lhs = data.legs[x].mats[a] @ mats[a]
            worst = max(worst, float(np.max(np.abs(lhs - cone.legs[x].mats[a]), initial=0.0)))
    return tuple(mats), worst


def mediating_morphism_co(data, cocone: Cocone):
    diagram = data.diagram
    space = diagram.space
    mats = []
    if isinstance(data, ColimitData):
        for a in range(space.n_atoms):
            u = _hstack([cocone.legs[x].mats[a] for x in data.obj_order],
                        cocone.nadir.fibers[a].dim)
            mats.append(u @ data.section[a] if data.section is not None else u)
    else:
        for a in range(space.n_atoms):
            cols = _hstack([data.legs[x].mats[a] for x in diagram.index.objects],
                           data.nadir.fibers[a].dim)
            rhs = _hstack([cocone.legs[x].mats[a] for x in diagram.index.objects],
                          cocone.nadir.fibers[a].dim)
            if cols.size == 0 or cols.shape[0] == 0:
                mats.append(np.zeros((cocone.nadir.fibers[a].dim, data.nadir.fibers[a].dim)))
            else:
                sol, *_ = np.linalg.lstsq(cols.T, rhs.T, rcond=None)
                mats.append(sol.T)
    worst = 0.0
    for x in diagram.index.objects:
        for a in range(space.n_atoms):
            lhs = mats[a] @ data.legs[x].mats[a]
            worst = max(worst, float(np.max(np.abs(lhs - cocone.legs[x].mats[a]), initial=0.0)))
    return tuple(mats), worst


def _vstack(blocks, total_rows, cols):
    blocks = [b for b in blocks]
    if not blocks:
        return np.zeros((0, cols))
    return np.vstack([b.reshape(b.shape[0], cols) for b in blocks])


def _hstack(blocks, rows):
    if not blocks:
        return np.zeros((rows, 0))
    return np.hstack([b.reshape(rows, b.shape[1]) for b in blocks])


def uniqueness_certificate(data) -> bool:
    """Joint injectivity (limits) or joint surjectivity (colimits) of legs."""
    diagram = data.diagram
    space = diagram.space
    if isinstance(data, (LimitData, ClaimedLimit)):
        apex = data.apex
        for a in range(space.n_atoms):
            stacked = _vstack([data.legs[x].mats[a] for x in diagram.index.objects],
                              None, apex.fibers[a].dim)
            if matrix_rank(stacked) != apex.fibers[a].dim:
                return False
        return True
    nadir = data.nadir
    for a in range(space.n_atoms):
        stacked = _hstack([data.legs[x].mats[a] for x in diagram.index.objects],
                          nadir.fibers[a].dim)
        if matrix_rank(stacked) != nadir.fibers[a].dim:
            return False
    return True


def validate_construction(data, morph_tol: float = MORPH_TOL, comm_tol: float = COMM_TOL) -> list:
    """Honest recheck of a constructed (co)cone: legs and commutation."""
    violations = []
    is_limit = isinstance(data, (LimitData, ClaimedLimit))
    holder = data.cone if isinstance(data, LimitData) else (
        data.cocone if isinstance(data, ColimitData) else None)
    if holder is None:
        holder = Cone(data.diagram, data.apex, data.legs) if is_limit else \
            Cocone(data.diagram, data.nadir, data.legs)
    r = holder.max_residual()
    if r > comm_tol:
        violations.append(f"commutation residual {r:.3g}")
    for x, leg in data.legs.items():
        ok, report = is_morphism(leg.source, leg.target, leg.mats, tol=morph_tol)
        if not ok:
            worst = max(v for v, _ in report)
            violations.append(f"leg {x!r} has pointwise norm {worst:.6g}")
    return violations


def _morphism_from_mats(source, target, mats, morph_tol):
    ok, report = is_morphism(source, target, mats, tol=morph_tol)
    phi = Morphism(source, target, tuple(mats),
                   norm_bounds=tuple(v for v, _ in report),
                   norm_exact=tuple(e for _, e in report),
                   check=False)
    return phi, ok


def check_universal(data, trials: int, seed: int, tol: float = 1e-9,
                    cfg: InstanceConfig | None = None) -> AuditReport:
    """Drive random (co)cones through the mediator and certify uniqueness."""
    cfg = cfg or InstanceConfig()
    t0 = time.perf_counter()
    name = getattr(data, "kind", type(data).__name__)
    failures = list(validate_construction(data))
    unique = uniqueness_certificate(data)
    if not unique:
        failures.append("uniqueness certificate failed (legs not jointly cancellative)")
    is_limit = isinstance(data, (LimitData, ClaimedLimit))
    diagnostics = []
    max_res = 0.0

    def run_trial(t):
        rng = rng_for(seed, t)
        if is_limit:
            cone = random_cone(rng, data.diagram, cfg)
            mats, res = mediating_morphism(data, cone)
            phi, ok = _morphism_from_mats(cone.apex, data.apex, mats, MORPH_TOL)
        else:
            cocone = random_cocone(rng, data.diagram, cfg)
            mats, res = mediating_morphism_co(data, cocone)
            phi, ok = _morphism_from_mats(data.nadir, cocone.nadir, mats, MORPH_TOL)
        return {"trial": t, "residual": res, "mediator_is_morphism": bool(ok)}

    diagnostics = _run_trials(run_trial, trials)
    for diag in diagnostics:
        max_res = max(max_res, diag["residual"])
        if diag["residual"] > tol:
            failures.append(f"trial {diag['trial']}: residual {diag['residual']:.3g}")
        if not diag["mediator_is_morphism"]:
            failures.append(f"trial {diag['trial']}: mediator violates the norm bound")
    passed = not failures
    return AuditReport(name, trials, seed, tol, max_res, unique, passed,
                       failures, diagnostics, time.perf_counter() - t0)


def _run_trials(run_trial, trials: int) -> list:
    n_threads = int(os.environ.get("BANMOD_THREADS", "1") or "1")
    if n_threads > 1 and trials > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            return list(pool.map(run_trial, range(trials)))
    return [run_trial(t) for t in range(trials)]


# ---------------------------------------------------------------------------
# isometric isomorphism checks


def _extreme_candidates(norm, dim, rng):
    from .norms import Lp

    out = []
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        out.append(e)
    if isinstance(norm, Lp) and norm.p == INF and 1 <= dim <= 10:
        for mask in range(1 << dim):
            s = np.array([1.0 if (mask >> i) & 1 else -1.0 for i in range(dim)])
            out.append(s / np.where(norm.weights > 0, norm.weights, 1.0))
    return out


def check_isometric_iso(phi: Morphism, samples: int = 20, seed: int = 0,
                        tol: float = 1e-9):
    """Invertible per atom and norm preserving on samples plus extreme points."""
    report = {"invertible": True, "max_norm_defect": 0.0}
    for A in phi.mats:
        if A.shape[0] != A.shape[1] or (A.shape[0] and matrix_rank(A) != A.shape[0]):
            report["invertible"] = False
            return False, report
    rng = rng_for(seed, 977)
    worst = 0.0
    for a in range(phi.source.space.n_atoms):
        fs = phi.source.fibers[a]
        ft = phi.target.fibers[a]
        if fs.dim == 0:
            continue
        cands = [rng.standard_normal(fs.dim) for _ in range(samples)]
        cands += _extreme_candidates(fs.norm, fs.dim, rng)
        for v in cands:
            nv = eval_norm(fs.norm, v)
            nw = eval_norm(ft.norm, phi.mats[a] @ v)
            worst = max(worst, abs(nv - nw) / max(1.0, nv))
    report["max_norm_defect"] = worst
    return worst <= tol, report


# ---------------------------------------------------------------------------
# fault injection


def scale_leg(data, obj, factor: float):
    """Scale one leg's matrices; bounds are rescaled, validity is not rechecked."""
    leg = data.legs[obj]
    scaled = Morphism(leg.source, leg.target, tuple(A * factor for A in leg.mats),
                      norm_bounds=tuple(b * factor for b in leg.norm_bounds),
                      norm_exact=leg.norm_exact, check=False)
    legs = dict(data.legs)
    legs[obj] = scaled
    if isinstance(data, LimitData):
        return LimitData(data.diagram, data.apex, legs, data.kind, data.ambient,
                         data.obj_order, data.basis)
    return ColimitData(data.diagram, data.nadir, legs, data.kind, data.ambient,
                       data.obj_order, data.section)


def nonzero_legs(data) -> list:
    return [x for x, leg in data.legs.items()
            if any(np.max(np.abs(A), initial=0.0) > 1e-9 for A in leg.mats)]


# ---------------------------------------------------------------------------
# audit registry: one entry point per construction


def _build_instance(name: str, rng, cfg: InstanceConfig):
    if name == "kernel":
        space = random_space(rng, cfg)
        M, N = random_module(rng, space, cfg), random_module(rng, space, cfg)
        return kernel(random_morphism(rng, M, N)).limit
    if name == "equalizer":
        space = random_space(rng, cfg)
        M, N = random_module(rng, space, cfg), random_module(rng, space, cfg)
        return equalizer(random_morphism(rng, M, N), random_morphism(rng, M, N)).limit
    if name == "product":
        space = random_space(rng, cfg)
        k = int(rng.integers(2, 5))
        return product([random_module(rng, space, cfg) for _ in range(k)],
                       [f"M{i}" for i in range(k)])
    if name == "pullback":
        space = random_space(rng, cfg)
        M, N, Q = (random_module(rng, space, cfg) for _ in range(3))
        return pullback(random_morphism(rng, M, Q), random_morphism(rng, N, Q)).limit
    if name == "inverse-limit":
        return inverse_limit(random_inverse_system(rng, cfg, int(rng.integers(2, 5))))
    if name == "cokernel":
        space = random_space(rng, cfg)
        M, N = random_module(rng, space, cfg), random_module(rng, space, cfg)
        return cokernel(random_morphism(rng, M, N)).colimit
    if name == "coequalizer":
        space = random_space(rng, cfg)
        M, N = random_module(rng, space, cfg), random_module(rng, space, cfg)
        return coequalizer(random_morphism(rng, M, N), random_morphism(rng, M, N)).colimit
    if name == "coproduct":
        space = random_space(rng, cfg)
        k = int(rng.integers(2, 5))
        return coproduct([random_module(rng, space, cfg) for _ in range(k)],
                         [f"M{i}" for i in range(k)])
    if name == "pushout":
        space = random_space(rng, cfg)
        M, N, Q = (random_module(rng, space, cfg) for _ in range(3))
        return pushout(random_morphism(rng, Q, M), random_morphism(rng, Q, N)).colimit
    if name == "direct-limit":
        return direct_limit(random_direct_system(rng, cfg, int(rng.integers(2, 5))))
    if name == "limit-engine":
        shape = DIAGRAM_SHAPES[int(rng.integers(0, len(DIAGRAM_SHAPES)))]
        return limit_of_diagram(random_diagram(rng, cfg, shape))
    if name == "colimit-engine":
        shape = DIAGRAM_SHAPES[int(rng.integers(0, len(DIAGRAM_SHAPES)))]
        return colimit_of_diagram(random_diagram(rng, cfg, shape))
    raise ValueError(f"unknown construction {name!r}")


UNIVERSAL_CONSTRUCTIONS = (
    "kernel", "equalizer", "product", "pullback", "inverse-limit",
    "cokernel", "coequalizer", "coproduct", "pushout", "direct-limit",
    "limit-engine", "colimit-engine",
)


def audit_construction(name: str, trials: int, seed: int, tol: float = 1e-9,
                       cfg: InstanceConfig | None = None,
                       inject_fault: bool = False) -> AuditReport:
    """Fresh instance and fresh (co)cone per trial; aggregates a report.

    With inject_fault set, one constructed leg per trial is scaled by
    1 + 1e-3 and the report records whether the audit caught it; the
    report passes only if every fault was detected.
    """
    cfg = cfg or InstanceConfig()
    t0 = time.perf_counter()

    def run_trial(t):
        rng = rng_for(seed, t)
        for attempt in range(20):
            data = _build_instance(name, rng, cfg)
            if not inject_fault or nonzero_legs(data):
                break
        diag = {"trial": t}
        if inject_fault:
            targets = nonzero_legs(data)
            pick = targets[int(rng.integers(0, len(targets)))]
            data = scale_leg(data, pick, 1.0 + 1e-3)
            violations = validate_construction(data)
            diag["fault_leg"] = pick
            diag["detected"] = bool(violations)
            diag["residual"] = 0.0
            return diag
        violations = validate_construction(data)
        unique = uniqueness_certificate(data)
        rng_cone = rng_for(seed, t, 1)
        if isinstance(data, LimitData):
            cone = random_cone(rng_cone, data.diagram, cfg)
            mats, res = mediating_morphism(data, cone)
            _, ok = _morphism_from_mats(cone.apex, data.apex, mats, MORPH_TOL)
        else:
            cocone = random_cocone(rng_cone, data.diagram, cfg)
            mats, res = mediating_morphism_co(data, cocone)
            _, ok = _morphism_from_mats(data.nadir, cocone.nadir, mats, MORPH_TOL)
        diag.update({"residual": res, "mediator_is_morphism": bool(ok),
                     "construction_ok": not violations, "uniqueness_ok": bool(unique)})
        if violations:
            diag["violations"] = violations
        return diag

    diagnostics = _run_trials(run_trial, trials)
    failures = []
    max_res = 0.0
    unique_all = True
    for diag in diagnostics:
        if inject_fault:
            if not diag["detected"]:
                failures.append(f"trial {diag['trial']}: fault not detected")
            continue
        max_res = max(max_res, diag["residual"])
        if diag["residual"] > tol:
            failures.append(f"trial {diag['trial']}: residual {diag['residual']:.3g}")
        if not diag["mediator_is_morphism"]:
            failures.append(f"trial {diag['trial']}: mediator violates the norm bound")
        if not diag["construction_ok"]:
            failures.append(f"trial {diag['trial']}: {diag['violations']}")
        if not diag["uniqueness_ok"]:
            unique_all = False
            failures.append(f"trial {diag['trial']}: uniqueness certificate failed")
    passed = not failures
    label = name + ("+fault" if inject_fault else "")
    return AuditReport(label, trials, seed, tol, max_res, unique_all, passed,
                       failures, diagnostics, time.perf_counter() - t0)
