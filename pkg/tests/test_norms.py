import math

import numpy as np
import pytest

from banmod.norms import (
    INF,
    ComposeLinear,
    DualOf,
    Lp,
    NormError,
    OpNormOf,
    QuotientOf,
    SumOf,
    SupOf,
    complement_coords,
    dist_to_subspace,
    dual_expr,
    dual_index,
    dual_norm,
    eval_norm,
    l2_factor,
    lp,
    null_space,
    op_norm,
    polyhedral_flatten,
    seminorm_kernel,
)


# --- oracles -----------------------------------------------------------------

def grid_dist_1d(n, b, v, radius=6.0, step=1e-4):
    """Dense grid search over a one-dimensional subspace."""
    ts = np.arange(-radius, radius + step, step)
    vals = [eval_norm(n, v + t * b) for t in ts]
    return min(vals)


def svd_2x2_sigma_max(A):
    """Closed-form largest singular value of a 2x2 matrix."""
    a, b = A[0]
    c, d = A[1]
    t = a * a + b * b + c * c + d * d
    det = a * d - b * c
    disc = math.sqrt(max(t * t - 4 * det * det, 0.0))
    return math.sqrt((t + disc) / 2.0)


def enum_op_norm(A, src_p, tgt_p, weights_src=None, weights_tgt=None):
    """Exact induced norm via extreme-point enumeration and closed forms."""
    e, d = A.shape
    ws = np.ones(d) if weights_src is None else weights_src
    wt = np.ones(e) if weights_tgt is None else weights_tgt

    def tgt_val(y):
        z = wt * np.abs(y)
        return {1: z.sum(), 2: np.linalg.norm(z), INF: z.max(initial=0.0)}[tgt_p]

    if src_p == 1:
        return max(tgt_val(A[:, j] / ws[j]) for j in range(d))
    if src_p == INF:
        best = 0.0
        for mask in range(1 << d):
            s = np.array([1.0 if (mask >> i) & 1 else -1.0 for i in range(d)]) / ws
            best = max(best, tgt_val(A @ s))
        return best
    # src l2
    M = A / ws[None, :]
    if tgt_p == 2:
        return float(np.linalg.svd(wt[:, None] * M)[1][0])
    if tgt_p == INF:
        return float(max(wt[i] * np.linalg.norm(M[i]) for i in range(e)))
    # tgt l1: maximise over sign patterns of the rows
    best = 0.0
    for mask in range(1 << e):
        s = np.array([1.0 if (mask >> i) & 1 else -1.0 for i in range(e)])
        best = max(best, float(np.linalg.norm(M.T @ (wt * s))))
    return best


# --- evaluation --------------------------------------------------------------

def test_lp_leaves():
    assert eval_norm(Lp(2, (1.0, 1.0)), (3.0, 4.0)) == pytest.approx(5.0)
    assert eval_norm(Lp(1, (1.0, 2.0)), (3.0, -1.0)) == pytest.approx(5.0)
    assert eval_norm(Lp(INF, (1.0, 1.0)), (2.0, -3.0)) == pytest.approx(3.0)
    assert eval_norm(Lp(2, ()), ()) == 0.0


def test_sup_of_slices():
    n = SupOf((lp(2, 1), lp(2, 1)))
    assert eval_norm(n, (2.0, -3.0)) == pytest.approx(3.0)


def test_sum_of_slices():
    n = SumOf((lp(2, 2), lp(1, 1)))
    assert eval_norm(n, (3.0, 4.0, -2.0)) == pytest.approx(7.0)


def test_compose_linear():
    E = np.array([[1.0], [1.0]])
    n = ComposeLinear(E, lp(1, 2))
    assert eval_norm(n, (2.0,)) == pytest.approx(4.0)


def test_quotient_l2_projection():
    n = QuotientOf(Lp(2, (1.0, 1.0)), np.array([[1.0], [0.0]]))
    assert eval_norm(n, (3.0, 4.0)) == pytest.approx(4.0)


def test_dim_mismatch_raises():
    with pytest.raises(NormError):
        eval_norm(lp(2, 2), (1.0, 2.0, 3.0))


def test_rank_deficient_basis_raises():
    with pytest.raises(NormError):
        QuotientOf(lp(2, 2), np.array([[1.0, 2.0], [1.0, 2.0]]))


def test_dual_index():
    assert dual_index(1) == INF
    assert dual_index(2) == 2
    assert dual_index(INF) == 1


# --- null spaces and coordinates ----------------------------------------------

def test_null_space_basics():
    basis = null_space(np.array([[1.0, 0.0]]))
    assert basis.shape == (2, 1)
    assert np.allclose(basis[:, 0], [0.0, 1.0])
    assert null_space(np.eye(3)).shape == (3, 0)
    assert np.allclose(null_space(np.zeros((2, 2))), np.eye(2))


def test_complement_coords():
    S = np.array([[1.0], [0.0], [0.0]])
    idx, E, P = complement_coords(S)
    assert idx == (1, 2)
    w = np.array([5.0, 2.0, 3.0])
    # residual w - E P w must lie in span(S)
    r = w - E @ (P @ w)
    assert np.allclose(r[1:], 0.0)


# --- distances ----------------------------------------------------------------

def test_dist_l2_exact():
    res = dist_to_subspace(lp(2, 2), np.array([[1.0], [0.0]]), (3.0, 4.0))
    assert res.route == "l2"
    assert res.value == pytest.approx(4.0)


def test_dist_whole_space_is_zero():
    res = dist_to_subspace(lp(1, 2), np.eye(2), (3.0, -7.0))
    assert res.value == pytest.approx(0.0, abs=1e-9)


def test_dist_linf_example():
    b = np.array([[1.0], [1.0]])
    res = dist_to_subspace(Lp(INF, (1.0, 1.0)), b, (1.0, -1.0))
    assert res.route == "lp"
    assert res.value == pytest.approx(1.0)
    assert res.value == pytest.approx(grid_dist_1d(Lp(INF, (1.0, 1.0)), b[:, 0], np.array([1.0, -1.0])), abs=1e-3)


def test_dist_l1_example():
    b = np.array([[1.0], [1.0]])
    res = dist_to_subspace(lp(1, 2), b, (1.0, -1.0))
    assert res.value == pytest.approx(2.0)


def test_dist_lp_vs_grid_random():
    rng = np.random.default_rng(11)
    for _ in range(12):
        d = rng.integers(2, 4)
        p = [1, INF][rng.integers(0, 2)]
        n = Lp(p, rng.uniform(0.5, 2.0, size=d))
        b = rng.normal(size=(d, 1))
        v = rng.normal(size=d)
        res = dist_to_subspace(n, b, v)
        oracle = grid_dist_1d(n, b[:, 0] / np.linalg.norm(b), v)
        assert abs(res.value - oracle) < 1e-3


def test_dist_subgradient_route_matches_lp():
    rng = np.random.default_rng(5)
    for _ in range(14):
        d = int(rng.integers(2, 7))
        k = int(rng.integers(1, d))
        p = [1, INF][rng.integers(0, 2)]
        n = Lp(p, rng.uniform(0.5, 2.0, size=d))
        B = rng.normal(size=(d, k))
        v = rng.normal(size=d)
        exact = dist_to_subspace(n, B, v, method="lp")
        kelley = dist_to_subspace(n, B, v, tol=1e-8, method="subgradient")
        assert abs(exact.value - kelley.value) < 1e-6


def test_dist_mixed_ambient_certified():
    # SumOf(l2, l1) has no flat or l2 representation; cutting plane handles it
    n = SumOf((lp(2, 2), lp(1, 1)))
    B = np.array([[1.0], [0.5], [-1.0]])
    v = np.array([1.0, -2.0, 0.5])
    res = dist_to_subspace(n, B, v, tol=1e-8)
    assert res.route == "subgradient"
    assert res.certified
    oracle = grid_dist_1d(n, B[:, 0], v)
    assert abs(res.value - oracle) < 1e-3


def test_dist_compose_rewrite():
    E = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    n = ComposeLinear(E, lp(2, 3))
    B = np.array([[1.0], [0.0]])
    v = np.array([1.0, 2.0])
    res = dist_to_subspace(n, B, v)
    oracle = grid_dist_1d(n, B[:, 0], v)
    assert abs(res.value - oracle) < 1e-3


# --- operator norms -----------------------------------------------------------

def test_op_norm_identity_l1_linf():
    res = op_norm(np.eye(2), lp(1, 2), lp(INF, 2))
    assert res.exact and res.value == pytest.approx(1.0)


def test_op_norm_zero():
    res = op_norm(np.zeros((2, 2)), lp(2, 2), lp(2, 2))
    assert res.value == 0.0


def test_op_norm_golden_ratio():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    res = op_norm(A, lp(2, 2), lp(2, 2), tol=1e-9)
    assert res.route == "power"
    assert abs(res.value - (1 + math.sqrt(5)) / 2) < 1e-7
    assert abs(res.value - svd_2x2_sigma_max(A)) < 1e-7


def test_op_norm_power_3x3_fixtures():
    rng = np.random.default_rng(2)
    for _ in range(8):
        A = rng.normal(size=(3, 3))
        res = op_norm(A, lp(2, 3), lp(2, 3), tol=1e-9)
        assert abs(res.value - np.linalg.svd(A)[1][0]) < 1e-7


def test_op_norm_exact_routes_vs_enumeration():
    rng = np.random.default_rng(17)
    for src_p in (1, 2, INF):
        for tgt_p in (1, 2, INF):
            for _ in range(4):
                e, d = int(rng.integers(1, 5)), int(rng.integers(1, 5))
                A = rng.normal(size=(e, d))
                res = op_norm(A, lp(src_p, d), lp(tgt_p, e), tol=1e-10)
                assert res.exact
                oracle = enum_op_norm(A, src_p, tgt_p)
                tol = 1e-7 if 2 in (src_p, tgt_p) else 1e-9  # power route is iterative
                assert abs(res.value - oracle) < tol


def test_op_norm_submultiplicative():
    rng = np.random.default_rng(23)
    for _ in range(10):
        d = 3
        A = rng.normal(size=(d, d))
        B = rng.normal(size=(d, d))
        for p in (1, 2, INF):
            n = lp(p, d)
            ab = op_norm(A @ B, n, n).value
            bound = op_norm(A, n, n).value * op_norm(B, n, n).value
            assert ab <= bound + 1e-9


def test_op_norm_heuristic_is_lower_bound():
    rng = np.random.default_rng(29)
    A = rng.normal(size=(3, 3))
    exact = op_norm(A, lp(2, 3), lp(2, 3)).value
    heur = op_norm(A, lp(2, 3), lp(2, 3), method="ascent")
    assert not heur.exact
    assert heur.value <= exact + 1e-9
    assert heur.value >= 0.8 * exact  # ascent should get close on l2 pairs


def test_op_norm_sign_enumeration_matches_ascent_bound():
    rng = np.random.default_rng(31)
    A = rng.normal(size=(2, 3))
    res = op_norm(A, lp(INF, 3), lp(1, 2))
    oracle = enum_op_norm(A, INF, 1)
    assert res.exact
    assert abs(res.value - oracle) < 1e-9


def test_op_norm_compose_rewrites():
    K = np.linalg.qr(np.random.default_rng(4).normal(size=(4, 2)))[0]
    src = ComposeLinear(K, lp(2, 4))
    A = np.random.default_rng(8).normal(size=(3, 2))
    res = op_norm(A, src, lp(2, 3))
    # oracle: substitute u = K x with K orthonormal, so x = K^T u on range(K)
    oracle = np.linalg.svd(A @ K.T @ K)[1][0]
    assert res.exact
    assert abs(res.value - oracle) < 1e-7


# --- duals -------------------------------------------------------------------

def test_dual_norm_holder():
    val, exact = dual_norm(lp(1, 3), (1.0, -2.0, 0.5))
    assert exact and val == pytest.approx(2.0)
    val, exact = dual_norm(lp(INF, 2), (1.0, -2.0))
    assert exact and val == pytest.approx(3.0)


def test_dual_of_dual_is_identity_on_lp():
    rng = np.random.default_rng(13)
    for p in (1, 2, INF):
        n = Lp(p, rng.uniform(0.5, 2.0, size=3))
        nn = DualOf(DualOf(n))
        for _ in range(5):
            v = rng.normal(size=3)
            assert abs(eval_norm(nn, v) - eval_norm(n, v)) < 1e-8


def test_dual_expr_weighted():
    n = Lp(1, (2.0, 4.0))
    d = dual_expr(n)
    assert isinstance(d, Lp) and d.p == INF
    assert np.allclose(d.weights, [0.5, 0.25])


def test_dual_norm_quotient_annihilator():
    # quotient fiber on complement coordinates: exact via change of variables
    amb = lp(1, 3)
    B = np.array([[1.0], [1.0], [0.0]])
    _, E, _ = complement_coords(B)
    fiber = ComposeLinear(E, QuotientOf(amb, B))
    xi = np.array([1.5, -0.5])
    val, exact = dual_norm(fiber, xi)
    assert exact
    # oracle: sup <xi, x> over the fiber unit ball by dense sampling
    rng = np.random.default_rng(19)
    best = 0.0
    for _ in range(20000):
        x = rng.normal(size=2) * 3
        nx = eval_norm(fiber, x)
        if nx > 1e-12:
            best = max(best, float(xi @ x) / nx)
    assert val >= best - 1e-9
    assert abs(val - best) < 5e-3


def test_opnormof_eval_is_op_norm():
    n = OpNormOf(lp(1, 2), lp(INF, 2))
    flat = np.eye(2).reshape(-1)
    assert eval_norm(n, flat) == pytest.approx(1.0)


# --- structural analysis -------------------------------------------------------

def test_l2_factor_quotient():
    q = QuotientOf(lp(2, 3), np.array([[1.0], [0.0], [0.0]]))
    R = l2_factor(q)
    v = np.array([3.0, 4.0, 0.0])
    assert abs(np.linalg.norm(R @ v) - 4.0) < 1e-12


def test_polyhedral_flatten():
    n = SumOf((lp(1, 2), Lp(1, (2.0,))))
    kind, w = polyhedral_flatten(n)
    assert kind == "l1"
    assert np.allclose(w, [1.0, 1.0, 2.0])
    assert polyhedral_flatten(SumOf((lp(2, 2), lp(1, 1)))) is None


def test_seminorm_kernel():
    n = Lp(1, (1.0, 0.0))
    K = seminorm_kernel(n)
    assert K.shape == (2, 1)
    assert np.allclose(np.abs(K[:, 0]), [0.0, 1.0])
    assert seminorm_kernel(lp(2, 3)).shape == (3, 0)
    q = QuotientOf(lp(2, 2), np.array([[1.0], [0.0]]))
    assert seminorm_kernel(q).shape == (2, 1)


# --- norm axioms (randomised) ---------------------------------------------------

def _random_norms(rng):
    yield Lp(1, rng.uniform(0.5, 2.0, size=3))
    yield Lp(2, rng.uniform(0.5, 2.0, size=3))
    yield Lp(INF, rng.uniform(0.5, 2.0, size=3))
    yield SupOf((lp(2, 2), lp(1, 1)))
    yield SumOf((lp(INF, 2), lp(2, 2)))
    yield QuotientOf(lp(2, 3), np.array([[1.0], [0.5], [0.0]]))
    yield QuotientOf(lp(1, 3), np.array([[1.0], [0.5], [0.0]]))
    yield ComposeLinear(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]), lp(2, 3))
    yield DualOf(Lp(1, rng.uniform(0.5, 2.0, size=3)))


def test_homogeneity_and_triangle():
    rng = np.random.default_rng(37)
    for n in _random_norms(rng):
        d = n.dim
        for _ in range(6):
            v = rng.normal(size=d)
            w = rng.normal(size=d)
            t = float(rng.normal()) * 2.0
            nv, nw = eval_norm(n, v), eval_norm(n, w)
            assert abs(eval_norm(n, t * v) - abs(t) * nv) < 1e-7 * max(1.0, abs(t) * nv)
            assert eval_norm(n, v + w) <= nv + nw + 1e-7


def test_dist_bounded_by_norm_and_zero_on_span():
    rng = np.random.default_rng(41)
    for n in _random_norms(rng):
        d = n.dim
        B = rng.normal(size=(d, 1))
        v = rng.normal(size=d)
        res = dist_to_subspace(n, B, v)
        assert res.value <= eval_norm(n, v) + 1e-7
        inside = dist_to_subspace(n, B, 1.7 * B[:, 0])
        assert inside.value < 1e-6
