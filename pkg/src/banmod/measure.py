"""Finite atomic measure spaces, functions on them, and their morphisms.

A space is an ordered list of atoms with strictly positive finite mass;
atom order is canonical and fixed.  Functions are per-atom values, with
a separate extended-real variant for lattice operations.  The distance
on functions integrates the truncated difference against the fixed
reference weights 2^-(k+1) over the canonical atom order, which keeps
it finite, deterministic and independent of the (possibly large) atom
masses while generating the same topology.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable

import numpy as np


class MeasureError(ValueError):
    pass


def _ro(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class MeasureSpace:
    ids: tuple[Hashable, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        ids = tuple(self.ids)
        masses = tuple(float(m) for m in self.masses)
        if len(ids) != len(masses):
            raise MeasureError("ids and masses must have the same length")
        if len(set(ids)) != len(ids):
            raise MeasureError("atom ids must be pairwise distinct")
        for m in masses:
            if not (m > 0 and math.isfinite(m)):
                raise MeasureError(f"atom mass must be strictly positive and finite, got {m}")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "masses", masses)

    @property
    def n_atoms(self) -> int:
        return len(self.ids)

    def index(self, atom_id: Hashable) -> int:
        try:
            return self._index[atom_id]
        except KeyError:
            raise MeasureError(f"unknown atom {atom_id!r}") from None

    @cached_property
    def _index(self) -> dict:
        return {a: k for k, a in enumerate(self.ids)}

    @cached_property
    def dyadic_weights(self) -> np.ndarray:
        return _ro([2.0 ** -(k + 1) for k in range(self.n_atoms)])

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))

    def __eq__(self, other):
        return isinstance(other, MeasureSpace) and self.ids == other.ids and self.masses == other.masses

    def __hash__(self):
        return hash((self.ids, self.masses))

    def __repr__(self):
        inner = ", ".join(f"{a}:{m:g}" for a, m in zip(self.ids, self.masses))
        return f"MeasureSpace[{inner}]"


def dirac_point() -> MeasureSpace:
    """The one-atom probability space."""
    return MeasureSpace(("p",), (1.0,))


def product_space(X: MeasureSpace, Y: MeasureSpace) -> MeasureSpace:
    """Product space: atoms are pairs in lexicographic order, masses multiply."""
    ids = tuple((a, b) for a in X.ids for b in Y.ids)
    masses = tuple(ma * mb for ma in X.masses for mb in Y.masses)
    return MeasureSpace(ids, masses)


@dataclass(frozen=True, eq=False)
class L0Fun:
    """Real-valued function, one finite value per atom."""

    space: MeasureSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.space.n_atoms,):
            raise MeasureError("value count must equal the atom count")
        if not np.all(np.isfinite(v)):
            raise MeasureError("values must be finite")
        object.__setattr__(self, "values", _ro(v))

    def _check(self, other: "L0Fun") -> None:
        if self.space != other.space:
            raise MeasureError("functions live on different spaces")

    def __add__(self, other):
        self._check(other)
        return L0Fun(self.space, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return L0Fun(self.space, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, L0Fun):
            self._check(other)
            return L0Fun(self.space, self.values * other.values)
        return L0Fun(self.space, self.values * float(other))

    __rmul__ = __mul__

    def __abs__(self):
        return L0Fun(self.space, np.abs(self.values))

    def __eq__(self, other):
        return (
            isinstance(other, L0Fun)
            and self.space == other.space
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.space, self.values.tobytes()))

    def extended(self) -> "L0ExtFun":
        return L0ExtFun(self.space, self.values)


@dataclass(frozen=True, eq=False)
class L0ExtFun:
    """Extended-real function; values may be +-inf."""

    space: MeasureSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.space.n_atoms,):
            raise MeasureError("value count must equal the atom count")
        if np.any(np.isnan(v)):
            raise MeasureError("values may not be NaN")
        object.__setattr__(self, "values", _ro(v))

    def __eq__(self, other):
        return (
            isinstance(other, L0ExtFun)
            and self.space == other.space
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.space, self.values.tobytes()))


def const_fun(space: MeasureSpace, c: float) -> L0Fun:
    return L0Fun(space, np.full(space.n_atoms, float(c)))


def indicator(space: MeasureSpace, atoms) -> L0Fun:
    vals = np.zeros(space.n_atoms)
    for a in atoms:
        vals[space.index(a)] = 1.0
    return L0Fun(space, vals)


def l0_distance(f: L0Fun, g: L0Fun) -> float:
    """Integral of min(|f-g|, 1) against the dyadic reference weights."""
    if f.space != g.space:
        raise MeasureError("functions live on different spaces")
    diff = np.minimum(np.abs(f.values - g.values), 1.0)
    return float(np.dot(f.space.dyadic_weights, diff))


def _ext_values(fs) -> tuple[MeasureSpace, np.ndarray]:
    fs = list(fs)
    if not fs:
        raise MeasureError("empty family")
    space = fs[0].space
    rows = []
    for f in fs:
        if not isinstance(f, (L0Fun, L0ExtFun)):
            raise MeasureError("expected L0Fun or L0ExtFun values")
        if f.space != space:
            raise MeasureError("functions live on different spaces")
        rows.append(f.values)
    return space, np.array(rows)


def lattice_sup(fs) -> L0ExtFun:
    """Per-atom supremum of a nonempty finite family."""
    space, rows = _ext_values(fs)
    return L0ExtFun(space, rows.max(axis=0))


def lattice_inf(fs) -> L0ExtFun:
    """Per-atom infimum of a nonempty finite family."""
    space, rows = _ext_values(fs)
    return L0ExtFun(space, rows.min(axis=0))


@dataclass(frozen=True, eq=False)
class MeasMorphism:
    """Total atom map whose pushforward is absolutely continuous."""

    source: MeasureSpace
    target: MeasureSpace
    atom_map: tuple[tuple[Hashable, Hashable], ...]

    def __post_init__(self):
        mapping = dict(self.atom_map) if not isinstance(self.atom_map, dict) else dict(self.atom_map)
        for a in self.source.ids:
            if a not in mapping:
                raise MeasureError(f"atom map is not total: {a!r} unmapped")
        for a, b in mapping.items():
            self.source.index(a)
            self.target.index(b)
        if len(mapping) != self.source.n_atoms:
            raise MeasureError("atom map mentions unknown source atoms")
        canon = tuple((a, mapping[a]) for a in self.source.ids)
        object.__setattr__(self, "atom_map", canon)

    @cached_property
    def _map(self) -> dict:
        return dict(self.atom_map)

    def __call__(self, atom_id: Hashable) -> Hashable:
        return self._map[atom_id]

    def target_index(self, source_pos: int) -> int:
        return self.target.index(self.atom_map[source_pos][1])

    def __eq__(self, other):
        return (
            isinstance(other, MeasMorphism)
            and self.source == other.source
            and self.target == other.target
            and self.atom_map == other.atom_map
        )

    def __hash__(self):
        return hash((self.source, self.target, self.atom_map))


def meas_identity(X: MeasureSpace) -> MeasMorphism:
    return MeasMorphism(X, X, tuple((a, a) for a in X.ids))


def meas_compose(sigma: MeasMorphism, tau: MeasMorphism) -> MeasMorphism:
    """sigma after tau."""
    if tau.target != sigma.source:
        raise MeasureError("morphisms do not compose")
    return MeasMorphism(tau.source, sigma.target, tuple((a, sigma(b)) for a, b in tau.atom_map))


def projection_to_second(X: MeasureSpace, Y: MeasureSpace) -> MeasMorphism:
    """The coordinate projection X x Y -> Y as a measure-space morphism."""
    prod = product_space(X, Y)
    return MeasMorphism(prod, Y, tuple((pair, pair[1]) for pair in prod.ids))


def pushforward(tau: MeasMorphism) -> tuple[np.ndarray, bool]:
    """Per-target-atom total mass, and the absolute-continuity flag.

    With strictly positive target masses the flag is always true; it is
    still computed from the definition.
    """
    out = np.zeros(tau.target.n_atoms)
    for pos, (_, b) in enumerate(tau.atom_map):
        out[tau.target.index(b)] += tau.source.masses[pos]
    ac = all(tau.target.masses[j] > 0 for j in range(tau.target.n_atoms) if out[j] > 0)
    return out, ac
