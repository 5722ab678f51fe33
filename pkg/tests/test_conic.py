import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from formation_isac.conic import (ConicInputError, ConicProblem, Constraint, Functional,
                                  dump_problem, embed_vector, hermitian_embed,
                                  hermitian_extract, load_problem, min_eigenvalue, solve)


def _sym(rng, n):
    a = rng.standard_normal((n, n))
    return (a + a.T) / 2


def _herm(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2


def lambda_max_problem(c):
    n = c.shape[0]
    return ConicProblem(blocks=[n], free_scalars=0, objective=Functional({0: c}),
                        constraints=[Constraint(Functional({0: np.eye(n)}), "=", 1.0)],
                        sense="max")


def random_feasible(rng, sizes=(2, 3, 4), m_eq=3, m_ineq=3):
    """Constraints built around a strictly feasible point; objective bounded below."""
    x0 = []
    for n in sizes:
        z = rng.standard_normal((n, n))
        x0.append(z @ z.T + 0.1 * np.eye(n))
    cons = []
    for k in range(m_eq + m_ineq):
        blocks = {j: _sym(rng, n) for j, n in enumerate(sizes) if rng.random() < 0.8 or j == 0}
        func = Functional(blocks, {0: float(rng.standard_normal())})
        val = func.value(x0, np.array([0.3]))
        if k < m_eq:
            cons.append(Constraint(func, "=", val))
        else:
            rel = "<=" if k % 2 else ">="
            cons.append(Constraint(func, rel, val + (0.5 if rel == "<=" else -0.5)))
    cons.append(Constraint(Functional(scalars={0: 1.0}), "<=", 10.0))
    cons.append(Constraint(Functional(scalars={0: 1.0}), ">=", -10.0))
    obj = Functional({j: np.eye(n) for j, n in enumerate(sizes)}, {0: 0.1})
    return ConicProblem(blocks=list(sizes), free_scalars=1, objective=obj, constraints=cons)


def violation(p, sol):
    worst = 0.0
    for c in p.constraints:
        lhs = c.func.value(sol.block_values, sol.scalar_values)
        gap = {"=": abs(lhs - c.rhs), "<=": lhs - c.rhs, ">=": c.rhs - lhs}[c.relation]
        worst = max(worst, gap)
    return worst


# -- embedding ------------------------------------------------------------------

def test_embed_identity_and_example():
    assert np.array_equal(hermitian_embed(np.eye(3)), np.eye(6))
    h = np.array([[0, 1j], [-1j, 0]])
    assert np.allclose(np.linalg.eigvalsh(hermitian_embed(h)), [-1, -1, 1, 1])


def test_embed_rejects_non_hermitian():
    with pytest.raises(ConicInputError):
        hermitian_embed(np.array([[0, 1j], [1j, 0]]))


@settings(max_examples=30)
@given(st.integers(1, 8), st.integers(0, 2**31))
def test_embedding_isometry(n, seed):
    rng = np.random.default_rng(seed)
    h = _herm(rng, n)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    e = hermitian_embed(h)
    xt = embed_vector(x)
    assert xt @ e @ xt == pytest.approx(np.real(x.conj() @ h @ x), rel=1e-12, abs=1e-12)
    assert np.trace(e) == pytest.approx(2 * np.trace(h).real, abs=1e-12)
    ev = np.sort(np.repeat(np.linalg.eigvalsh(h), 2))
    assert np.allclose(np.linalg.eigvalsh(e), ev, atol=1e-10)
    assert np.allclose(hermitian_extract(e), h, atol=1e-14)


def test_inner_product_convention():
    rng = np.random.default_rng(9)
    a, w = _herm(rng, 4), _herm(rng, 4)
    lhs = float(np.sum(hermitian_embed(a) / 2 * hermitian_embed(w)))
    assert lhs == pytest.approx(np.trace(a @ w).real, rel=1e-12)


# -- min eigenvalue ---------------------------------------------------------------

def _count_below(m, s):
    """Sylvester inertia: negative pivots of an LDL^T factorisation of m - s I."""
    _, d, _ = linalg.ldl(m - s * np.eye(m.shape[0]))
    return int(np.sum(np.linalg.eigvalsh(d) < 0))


def test_min_eigenvalue_examples():
    assert min_eigenvalue(np.eye(4)) == 1.0
    assert min_eigenvalue(np.diag([3.0, -2.0])) == -2.0


def test_min_eigenvalue_inertia_bisection():
    m = _sym(np.random.default_rng(4), 24)
    lo, hi = -100.0, 100.0
    for _ in range(80):
        mid = (lo + hi) / 2
        if _count_below(m, mid) >= 1:
            hi = mid
        else:
            lo = mid
    assert min_eigenvalue(m) == pytest.approx((lo + hi) / 2, abs=1e-9)


# -- solver ---------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 5, 11, 24])
def test_lambda_max(n):
    c = _sym(np.random.default_rng(n), n)
    sol = solve(lambda_max_problem(c))
    w, v = np.linalg.eigh(c)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(w[-1], abs=1e-6)
    assert sol.residuals["gap"] <= 1e-7
    top = np.outer(v[:, -1], v[:, -1])
    if w[-1] - w[-2] > 1e-2:
        assert np.allclose(sol.block_values[0], top, atol=1e-4)


def test_lp_abs_value():
    p = ConicProblem(blocks=[], free_scalars=2, objective=Functional(scalars={0: 1.0}),
                     constraints=[Constraint(Functional(scalars={0: 1.0, 1: -1.0}), ">=", 0.0),
                                  Constraint(Functional(scalars={0: 1.0, 1: 1.0}), ">=", 0.0)])
    sol = solve(p)
    assert sol.status == "optimal" and abs(sol.scalar_values[0]) <= 1e-6


def test_lp_orthant_blocks():
    # min x + 2y over 1x1 blocks, x + y >= 3.
    p = ConicProblem(blocks=[1, 1], free_scalars=0,
                     objective=Functional({0: np.eye(1), 1: 2 * np.eye(1)}),
                     constraints=[Constraint(Functional({0: np.eye(1), 1: np.eye(1)}), ">=", 3.0)])
    sol = solve(p)
    assert sol.objective_value == pytest.approx(3.0, abs=1e-6)


def test_projection_against_grid():
    # min x + z with [[x, 1], [1, z]] PSD: the brute-force grid and the solver agree.
    e01 = np.array([[0.0, 0.5], [0.5, 0.0]])
    p = ConicProblem(blocks=[2], free_scalars=0, objective=Functional({0: np.eye(2)}),
                     constraints=[Constraint(Functional({0: e01}), "=", 1.0)])
    sol = solve(p)
    g = np.linspace(0.01, 4, 800)
    xx, zz = np.meshgrid(g, g)
    grid_best = np.min(np.where(xx * zz >= 1, xx + zz, np.inf))
    assert sol.objective_value == pytest.approx(2.0, abs=1e-6)
    assert sol.objective_value <= grid_best + 1e-9 and grid_best - 2.0 < 1e-2


def test_random_feasibility_instances():
    rng = np.random.default_rng(123)
    for _ in range(20):
        p = random_feasible(rng)
        sol = solve(p)
        assert sol.status == "optimal"
        assert violation(p, sol) <= 1e-7
        assert min(min_eigenvalue(x) for x in sol.block_values) >= -1e-7
        assert sol.dual_objective <= sol.objective_value + 1e-9 * (1 + abs(sol.objective_value))


def test_scale_invariance():
    p = random_feasible(np.random.default_rng(8))
    base = solve(p)
    scaled = ConicProblem(p.blocks, p.free_scalars,
                          Functional({j: 3 * c for j, c in p.objective.blocks.items()},
                                     {i: 3 * v for i, v in p.objective.scalars.items()}),
                          p.constraints)
    other = solve(scaled)
    assert other.objective_value == pytest.approx(3 * base.objective_value, rel=1e-6)


def test_infeasible_certificate():
    p = ConicProblem(blocks=[2], free_scalars=0, objective=Functional({0: np.eye(2)}),
                     constraints=[Constraint(Functional({0: np.eye(2)}), "=", -1.0)])
    assert solve(p).status == "infeasible"


def test_unbounded_certificate():
    p = ConicProblem(blocks=[2], free_scalars=0, objective=Functional({0: -np.eye(2)}),
                     constraints=[Constraint(Functional({0: np.diag([1.0, -1.0])}), "=", 0.0)])
    assert solve(p).status == "unbounded"


def test_bad_input_rejected():
    bad = np.array([[np.nan, 0], [0, 1]])
    p = ConicProblem(blocks=[2], free_scalars=0, objective=Functional({0: bad}), constraints=[])
    with pytest.raises(ConicInputError):
        solve(p)
    p = ConicProblem(blocks=[2], free_scalars=0,
                     objective=Functional({0: np.array([[0, 1.0], [0, 0]])}), constraints=[])
    with pytest.raises(ConicInputError):
        solve(p)


def test_dump_round_trip(tmp_path):
    p = random_feasible(np.random.default_rng(1))
    dump_problem(p, tmp_path / "p.txt")
    q = load_problem(tmp_path / "p.txt")
    assert q.blocks == p.blocks and q.free_scalars == p.free_scalars
    for a, b in zip(p.constraints, q.constraints):
        assert a.relation == b.relation and a.rhs == b.rhs
        for j, mat in a.func.blocks.items():
            assert np.array_equal(np.asarray(mat), b.func.blocks[j])
    assert solve(q).objective_value == pytest.approx(solve(p).objective_value, rel=1e-9)
