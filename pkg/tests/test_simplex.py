import numpy as np

from banmod.simplex import EQ, GE, LE, LPBuilder, simplex_solve


def test_min_x_at_least_three():
    b = LPBuilder()
    x = b.add_var("free", obj=1.0)
    b.add_constraint({x: 1.0}, GE, 3.0)
    res = b.solve()
    assert res.status == "optimal"
    assert abs(res.value - 3.0) < 1e-9
    assert abs(res.x[0] - 3.0) < 1e-9


def test_infeasible_system():
    b = LPBuilder()
    x = b.add_var("free", obj=1.0)
    b.add_constraint({x: 1.0}, GE, 3.0)
    b.add_constraint({x: 1.0}, LE, 2.0)
    assert b.solve().status == "infeasible"


def test_unbounded():
    b = LPBuilder()
    x = b.add_var("free", obj=1.0)
    b.add_constraint({x: 1.0}, LE, 5.0)
    assert b.solve().status == "unbounded"


def test_standard_form_direct():
    # min -x1 - 2 x2 s.t. x1 + x2 + s = 4, x1 <= 3 -> optimum at (0, 4)
    A = np.array([[1.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 1.0]])
    b = np.array([4.0, 3.0])
    c = np.array([-1.0, -2.0, 0.0, 0.0])
    res = simplex_solve(A, b, c)
    assert res.status == "optimal"
    assert abs(res.value - (-8.0)) < 1e-9


def test_equality_constraints():
    b = LPBuilder()
    x = b.add_var("nonneg", obj=2.0)
    y = b.add_var("nonneg", obj=1.0)
    b.add_constraint({x: 1.0, y: 1.0}, EQ, 10.0)
    res = b.solve()
    assert res.status == "optimal"
    assert abs(res.value - 10.0) < 1e-9
    assert abs(res.x[1] - 10.0) < 1e-9


def test_l1_distance_reformulation():
    # min |1 + t| + |-1 + t| over t has value 2 on the whole interval [-1, 1]
    b = LPBuilder()
    t = b.add_var("free")
    s0 = b.add_var("nonneg", obj=1.0)
    s1 = b.add_var("nonneg", obj=1.0)
    for sign in (1.0, -1.0):
        b.add_constraint({t: sign, s0: -1.0}, LE, -sign * 1.0)
        b.add_constraint({t: sign, s1: -1.0}, LE, sign * 1.0)
    res = b.solve()
    assert res.status == "optimal"
    assert abs(res.value - 2.0) < 1e-9


def test_degenerate_does_not_cycle():
    # classic degenerate instance; Bland's rule must terminate
    A = np.array(
        [
            [0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
            [0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )
    b = np.array([0.0, 0.0, 1.0])
    c = np.array([-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0])
    res = simplex_solve(A, b, c)
    assert res.status == "optimal"
    assert abs(res.value - (-0.05)) < 1e-9


def test_random_lps_against_vertex_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(25):
        # min c x over x >= 0, A x <= b with b > 0 (feasible, bounded by box)
        n, m = 3, 4
        A = rng.normal(size=(m, n))
        A = np.vstack([A, np.eye(n)])  # x_i <= cap keeps it bounded
        b = np.concatenate([rng.uniform(0.5, 2.0, size=m), np.full(n, 5.0)])
        c = rng.normal(size=n)
        builder = LPBuilder()
        xs = [builder.add_var("nonneg", obj=float(c[i])) for i in range(n)]
        for i in range(A.shape[0]):
            builder.add_constraint({xs[j]: float(A[i, j]) for j in range(n)}, LE, float(b[i]))
        res = builder.solve()
        assert res.status == "optimal"
        best = _brute_force_vertices(A, b, c)
        assert abs(res.value - best) < 1e-7


def _brute_force_vertices(A, b, c):
    """Enumerate basic feasible points of {x >= 0, Ax <= b}."""
    import itertools

    n = A.shape[1]
    rows = [(A[i], b[i]) for i in range(A.shape[0])]
    rows += [(-np.eye(n)[i], 0.0) for i in range(n)]
    best = np.inf
    for combo in itertools.combinations(range(len(rows)), n):
        M = np.array([rows[i][0] for i in combo])
        rhs = np.array([rows[i][1] for i in combo])
        try:
            x = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            continue
        if np.all(x >= -1e-9) and np.all(A @ x <= b + 1e-9):
            best = min(best, float(c @ x))
    return best
