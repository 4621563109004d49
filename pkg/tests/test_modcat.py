import numpy as np
import pytest

from banmod.measure import L0Fun, MeasureSpace, const_fun, dirac_point, indicator
from banmod.modcat import (
    Element,
    ModuleError,
    Morphism,
    MorphismNormError,
    compose,
    free_module,
    glue,
    hilbert_module,
    identity,
    is_epi,
    is_mono,
    is_morphism,
    lb_constant,
    lb_module,
    make_module,
    module_distance,
    pointwise_norm,
    scalar_action,
    zero_element,
    zero_module,
    zero_morphism,
)
from banmod.norms import INF, ComposeLinear, Lp, QuotientOf, lp


def two_atom_space():
    return MeasureSpace(("a", "b"), (1.0, 2.0))


def test_pointwise_norm_euclidean():
    X = two_atom_space()
    M = free_module(X, 2)
    v = Element(M, (np.array([3.0, 4.0]), np.array([0.0, 0.0])))
    assert pointwise_norm(v).values.tolist() == [5.0, 0.0]
    assert pointwise_norm(zero_element(M)).values.tolist() == [0.0, 0.0]


def test_pointwise_norm_quotient_fiber():
    X = MeasureSpace(("a",), (1.0,))
    q = QuotientOf(lp(2, 2), np.array([[1.0], [0.0]]))
    M = make_module(X, [(2, q)])
    v = Element(M, (np.array([3.0, 4.0]),))
    assert pointwise_norm(v).values[0] == pytest.approx(4.0)


def test_module_distance():
    X = two_atom_space()
    M = free_module(X, 1)
    v = Element(M, (np.array([0.2]), np.array([2.0])))
    w = zero_element(M)
    assert module_distance(v, w) == pytest.approx(0.5 * 0.2 + 0.25 * 1.0)
    assert module_distance(v, v) == 0.0
    P = dirac_point()
    N = free_module(P, 1)
    assert module_distance(Element(N, (np.array([3.0]),)), zero_element(N)) == pytest.approx(0.5)


def test_scalar_action_homogeneous():
    X = two_atom_space()
    M = free_module(X, 2)
    v = Element(M, (np.array([3.0, 0.0]), np.array([0.0, 7.0])))
    f = L0Fun(X, (2.0, 0.0))
    fv = scalar_action(f, v)
    assert pointwise_norm(fv).values.tolist() == [6.0, 0.0]
    assert scalar_action(const_fun(X, 1.0), v) == v
    chi = indicator(X, ["a"])
    assert pointwise_norm(scalar_action(chi, v)).values.tolist() == [3.0, 0.0]


def test_morphism_norm_gate():
    X = two_atom_space()
    M = free_module(X, 1)
    with pytest.raises(MorphismNormError):
        Morphism(M, M, (np.array([[2.0]]), np.array([[1.0]])))
    ok, report = is_morphism(M, M, (np.array([[2.0]]), np.array([[1.0]])))
    assert not ok
    assert report[0][0] == pytest.approx(2.0)
    ok, _ = is_morphism(M, M, (np.zeros((1, 1)), np.zeros((1, 1))))
    assert ok


def test_compose_and_identity():
    X = two_atom_space()
    M = free_module(X, 2)
    theta = 0.3
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    phi = Morphism(M, M, (rot, rot))
    assert compose(phi, identity(M)) == phi
    assert compose(identity(M), phi) == phi
    two = compose(phi, phi)
    theta2 = 2 * theta
    rot2 = np.array([[np.cos(theta2), -np.sin(theta2)], [np.sin(theta2), np.cos(theta2)]])
    assert np.allclose(two.mats[0], rot2)
    z = zero_morphism(M, M)
    assert compose(phi, z) == z


def test_compose_associative():
    rng = np.random.default_rng(3)
    X = two_atom_space()
    M = free_module(X, 3)
    ms = []
    for _ in range(3):
        mats = []
        for _ in range(2):
            A = rng.normal(size=(3, 3))
            A /= np.linalg.svd(A)[1][0] * 1.1
            mats.append(A)
        ms.append(Morphism(M, M, tuple(mats)))
    a, b, c = ms
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    assert all(np.allclose(x, y, atol=1e-13) for x, y in zip(left.mats, right.mats))


def test_mono_epi_examples():
    X = two_atom_space()
    M1 = free_module(X, 1)
    M2 = free_module(X, 2)
    assert is_mono(identity(M2)) and is_epi(identity(M2))
    col = Morphism(M1, M2, (np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]])))
    assert is_mono(col) and not is_epi(col)
    row = Morphism(M2, M1, (np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]])))
    assert is_epi(row) and not is_mono(row)


def test_glue():
    X = MeasureSpace(("a", "b"), (1.0, 1.0))
    M = free_module(X, 1)
    v1 = Element(M, (np.array([3.0]), np.array([9.0])))
    v2 = Element(M, (np.array([8.0]), np.array([4.0])))
    g = glue([{"a"}, {"b"}], [v1, v2])
    assert pointwise_norm(g).values.tolist() == [3.0, 4.0]
    assert glue([{"a", "b"}], [v1]) == v1
    assert glue([{"a"}, {"b"}], [v1, v1]) == v1
    with pytest.raises(ModuleError):
        glue([{"a"}], [v1])


def test_hilbert_module():
    X = two_atom_space()
    M, basis = hilbert_module(X, ["s", "t"])
    for e in basis.values():
        assert pointwise_norm(e).values.tolist() == [1.0, 1.0]
    rng = np.random.default_rng(5)
    v = Element(M, tuple(rng.normal(size=2) for _ in range(2)))
    w = Element(M, tuple(rng.normal(size=2) for _ in range(2)))
    lhs = np.array(pointwise_norm(v + w).values) ** 2 + np.array(pointwise_norm(v - w).values) ** 2
    rhs = 2 * np.array(pointwise_norm(v).values) ** 2 + 2 * np.array(pointwise_norm(w).values) ** 2
    assert np.allclose(lhs, rhs)
    # per-atom norm is the root of the sum of squared slots
    expect = [np.sqrt(np.sum(x ** 2)) for x in v.vectors]
    assert np.allclose(pointwise_norm(v).values, expect)


def test_lb_module():
    X = MeasureSpace(("x1", "x2"), (1.0, 2.0))
    Y = MeasureSpace(("y1",), (3.0,))
    M = make_module(Y, [(2, Lp(1, (1.0, 2.0)))])
    L = lb_module(X, M)
    assert L.space.n_atoms == 2
    assert L.dims == (2, 2)
    assert all(f.norm.key == M.fibers[0].norm.key for f in L.fibers)
    # one-atom X gives a fiber-for-fiber copy
    P = dirac_point()
    LP_mod = lb_module(P, M)
    assert LP_mod.dims == M.dims


def test_lb_constant_norm_rule():
    X = MeasureSpace(("x1", "x2"), (1.0, 2.0))
    Y = MeasureSpace(("y1", "y2"), (1.0, 1.0))
    M = free_module(Y, 2)
    rng = np.random.default_rng(11)
    v = Element(M, tuple(rng.normal(size=2) for _ in range(2)))
    lifted = lb_constant(X, v)
    base = pointwise_norm(v).values
    lifted_norm = pointwise_norm(lifted).values
    # |chi_X v|(x, y) = |v|(y)
    assert np.allclose(lifted_norm, np.concatenate([base, base]))
    # multiplying by an indicator of E x Y zeroes the complement
    chi = indicator(lifted.module.space, [pair for pair in lifted.module.space.ids if pair[0] == "x1"])
    cut = scalar_action(chi, lifted)
    assert np.allclose(pointwise_norm(cut).values, np.concatenate([base, [0.0, 0.0]]))


def test_zero_dim_fibers():
    X = two_atom_space()
    Z = zero_module(X)
    assert Z.is_zero
    z = zero_element(Z)
    assert pointwise_norm(z).values.tolist() == [0.0, 0.0]
    M = free_module(X, 2)
    to_zero = zero_morphism(M, Z)
    from_zero = zero_morphism(Z, M)
    assert compose(to_zero, from_zero).source == Z
    assert is_mono(from_zero) and is_epi(to_zero)


def test_norm_axioms_on_random_modules():
    rng = np.random.default_rng(7)
    X = two_atom_space()
    fibers = []
    for _ in range(2):
        p = [1, 2, INF][rng.integers(0, 3)]
        fibers.append((3, lp(p, 3)))
    M = make_module(X, fibers)
    for _ in range(20):
        v = Element(M, tuple(rng.normal(size=3) for _ in range(2)))
        w = Element(M, tuple(rng.normal(size=3) for _ in range(2)))
        t = float(rng.normal())
        nv = np.array(pointwise_norm(v).values)
        nw = np.array(pointwise_norm(w).values)
        assert np.allclose(np.array(pointwise_norm(v.scale(t)).values), abs(t) * nv, atol=1e-9)
        assert np.all(np.array(pointwise_norm(v + w).values) <= nv + nw + 1e-9)
