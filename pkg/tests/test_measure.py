import math

import numpy as np
import pytest

from banmod.measure import (
    L0ExtFun,
    L0Fun,
    MeasMorphism,
    MeasureError,
    MeasureSpace,
    dirac_point,
    indicator,
    l0_distance,
    lattice_inf,
    lattice_sup,
    meas_compose,
    meas_identity,
    product_space,
    pushforward,
)


def space(*pairs):
    return MeasureSpace(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


def test_space_validation():
    with pytest.raises(MeasureError):
        MeasureSpace(("a", "a"), (1.0, 2.0))
    with pytest.raises(MeasureError):
        MeasureSpace(("a",), (0.0,))
    with pytest.raises(MeasureError):
        MeasureSpace(("a",), (math.inf,))


def test_l0_distance_worked_examples():
    X = space(("a", 1.0), ("b", 2.0))
    f = L0Fun(X, (3.0, 0.5))
    g = L0Fun(X, (0.0, 0.0))
    assert l0_distance(f, g) == pytest.approx(0.625)
    assert l0_distance(f, f) == 0.0
    Y = space(("a", 1.0))
    assert l0_distance(L0Fun(Y, (10.0,)), L0Fun(Y, (0.0,))) == pytest.approx(0.5)


def test_l0_distance_space_mismatch():
    X, Y = space(("a", 1.0)), space(("b", 1.0))
    with pytest.raises(MeasureError):
        l0_distance(L0Fun(X, (1.0,)), L0Fun(Y, (1.0,)))


def test_l0_distance_is_metric_on_random_triples():
    rng = np.random.default_rng(0)
    X = space(("a", 1.0), ("b", 3.0), ("c", 0.5))
    for _ in range(50):
        f, g, h = (L0Fun(X, rng.normal(size=3) * 4) for _ in range(3))
        assert l0_distance(f, g) == pytest.approx(l0_distance(g, f))
        assert l0_distance(f, g) >= 0
        assert (l0_distance(f, g) == 0) == (f == g)
        assert l0_distance(f, h) <= l0_distance(f, g) + l0_distance(g, h) + 1e-12


def test_lattice_ops():
    X = space(("a", 1.0), ("b", 1.0))
    f = L0ExtFun(X, (1.0, 5.0))
    g = L0ExtFun(X, (2.0, 3.0))
    assert lattice_sup([f, g]).values.tolist() == [2.0, 5.0]
    assert lattice_sup([f]) == f
    h = L0ExtFun(X, (math.inf, 0.0))
    k = L0ExtFun(X, (1.0, -math.inf))
    assert lattice_inf([h, k]).values.tolist() == [1.0, -math.inf]
    with pytest.raises(MeasureError):
        lattice_sup([])


def test_lattice_laws_random():
    rng = np.random.default_rng(1)
    X = space(("a", 1.0), ("b", 1.0), ("c", 1.0))
    for _ in range(20):
        fs = [L0ExtFun(X, rng.normal(size=3)) for _ in range(3)]
        s = lattice_sup(fs)
        assert lattice_sup([s, s]) == s  # idempotent
        assert lattice_sup([fs[0], fs[1]]) == lattice_sup([fs[1], fs[0]])
        assert lattice_sup([lattice_sup(fs[:2]), fs[2].extended() if hasattr(fs[2], "extended") else fs[2]]) == s
        for f in fs:
            assert np.all(s.values >= f.values)


def test_pushforward_examples():
    X = space(("a", 1.0), ("b", 2.0))
    Y = space(("c", 5.0))
    tau = MeasMorphism(X, Y, (("a", "c"), ("b", "c")))
    masses, ac = pushforward(tau)
    assert masses.tolist() == [3.0] and ac
    masses, ac = pushforward(meas_identity(X))
    assert masses.tolist() == [1.0, 2.0] and ac
    X1 = space(("a", 1.0))
    Y2 = space(("c", 1.0), ("d", 1.0))
    masses, _ = pushforward(MeasMorphism(X1, Y2, (("a", "c"),)))
    assert masses.tolist() == [1.0, 0.0]


def test_pushforward_composes():
    X = space(("a", 1.0), ("b", 2.0), ("c", 4.0))
    Y = space(("u", 1.0), ("v", 1.0))
    Z = space(("z", 3.0))
    tau = MeasMorphism(X, Y, (("a", "u"), ("b", "u"), ("c", "v")))
    sigma = MeasMorphism(Y, Z, (("u", "z"), ("v", "z")))
    m1, _ = pushforward(meas_compose(sigma, tau))
    # pushforward of the composite equals pushing tau's masses through sigma
    mid, _ = pushforward(tau)
    m2 = np.zeros(1)
    for j, mass in enumerate(mid):
        m2[Z.index(sigma(Y.ids[j]))] += mass
    assert np.allclose(m1, m2)


def test_morphism_totality_enforced():
    X = space(("a", 1.0), ("b", 1.0))
    Y = space(("c", 1.0))
    with pytest.raises(MeasureError):
        MeasMorphism(X, Y, (("a", "c"),))


def test_product_space():
    X = space(("a", 1.0), ("b", 2.0))
    Y = space(("c", 3.0))
    P = product_space(X, Y)
    assert P.ids == (("a", "c"), ("b", "c"))
    assert P.masses == (3.0, 6.0)
    assert P.n_atoms == X.n_atoms * Y.n_atoms
    assert P.total_mass == pytest.approx(X.total_mass * Y.total_mass)


def test_product_with_point_is_identification():
    X = space(("a", 1.0), ("b", 2.5))
    P = product_space(X, dirac_point())
    assert P.n_atoms == X.n_atoms
    assert P.masses == X.masses
    assert [pair[0] for pair in P.ids] == list(X.ids)


def test_dirac_point():
    P = dirac_point()
    assert P.n_atoms == 1 and P.masses == (1.0,)
    assert product_space(P, P).n_atoms == 1
    f, g = L0Fun(P, (2.0,)), L0Fun(P, (2.3,))
    assert l0_distance(f, g) == pytest.approx(0.5 * 0.3)


def test_indicator():
    X = space(("a", 1.0), ("b", 1.0), ("c", 1.0))
    chi = indicator(X, ["b"])
    assert chi.values.tolist() == [0.0, 1.0, 0.0]
