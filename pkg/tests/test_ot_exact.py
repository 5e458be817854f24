"""Transportation simplex against brute-force enumeration and feasibility law."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otvq.ot_exact import DiscreteDist, OTError, TransportPlan, cost_matrix, exact_ot

from oracles import brute_force_ot_value, pairwise_sq


def _simplex_weights(rng, n):
    w = rng.uniform(0.1, 1.0, size=n)
    return w / w.sum()


def test_identity_coupling_costs_zero():
    rng = np.random.default_rng(5)
    atoms = rng.normal(size=(4, 2))
    mu = DiscreteDist.uniform(atoms)
    cost = cost_matrix(atoms, atoms)
    plan = exact_ot(mu, mu, cost)
    assert plan.value == 0.0
    assert np.allclose(plan.matrix, np.diag(mu.weights), atol=1e-12)


def test_zero_mass_atom_ships_nothing():
    mu = DiscreteDist(np.array([1.0, 0.0]), np.array([[0.0], [1.0]]))
    nu = DiscreteDist(np.array([0.5, 0.5]), np.array([[0.0], [2.0]]))
    cost = cost_matrix(mu.atoms, nu.atoms)
    plan = exact_ot(mu, nu, cost)
    assert np.array_equal(plan.matrix[1], np.zeros(2))
    assert np.allclose(plan.matrix[0], [0.5, 0.5], atol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_3x3_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    a = _simplex_weights(rng, 3)
    b = _simplex_weights(rng, 3)
    cost = rng.uniform(0.0, 5.0, size=(3, 3))
    plan = exact_ot(DiscreteDist(a, np.zeros((3, 1))), DiscreteDist(b, np.zeros((3, 1))), cost)
    expected = brute_force_ot_value(a, b, cost)
    assert abs(plan.value - expected) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_plans_are_feasible_vertices(n, k, seed):
    rng = np.random.default_rng(seed)
    a = _simplex_weights(rng, n)
    b = _simplex_weights(rng, k)
    cost = rng.uniform(0.0, 3.0, size=(n, k))
    plan = exact_ot(DiscreteDist(a, np.zeros((n, 1))), DiscreteDist(b, np.zeros((k, 1))), cost)
    assert np.all(plan.matrix >= 0.0)
    assert np.max(np.abs(plan.matrix.sum(axis=1) - a)) < 1e-9
    assert np.max(np.abs(plan.matrix.sum(axis=0) - b)) < 1e-9
    assert np.count_nonzero(plan.matrix) <= n + k - 1  # vertex solution
    assert abs(plan.value - (plan.matrix * cost).sum()) < 1e-12


def test_zero_cost_on_identical_atoms_is_zero():
    rng = np.random.default_rng(9)
    atoms = rng.normal(size=(6, 3))
    w = _simplex_weights(rng, 6)
    mu = DiscreteDist(w, atoms)
    plan = exact_ot(mu, mu, cost_matrix(atoms, atoms))
    assert plan.value <= 1e-15


def test_proportional_assignment_cardinalities():
    # 12 uniform source points vs 3 atoms weighted (1/2, 1/3, 1/6): the
    # optimal vertex plan is an assignment whose fibers have sizes 6, 4, 2
    rng = np.random.default_rng(42)
    pts = rng.normal(size=(12, 2))
    catoms = rng.normal(size=(3, 2)) * 2.0
    mu = DiscreteDist.uniform(pts)
    nu = DiscreteDist(np.array([1 / 2, 1 / 3, 1 / 6]), catoms)
    plan = exact_ot(mu, nu, cost_matrix(pts, catoms))
    support = plan.matrix > 1e-9
    assert np.array_equal(support.sum(axis=1), np.ones(12, dtype=int))  # one target per point
    assert np.array_equal(support.sum(axis=0), np.array([6, 4, 2]))
    assert np.allclose(plan.col_marginal, np.array([6, 4, 2]) / 12.0, atol=1e-12)


def test_degenerate_ties_terminate():
    # equal costs and equal weights: everything ties, Bland must still stop
    n = 5
    a = np.full(n, 1.0 / n)
    cost = np.ones((n, n))
    plan = exact_ot(DiscreteDist(a, np.zeros((n, 1))), DiscreteDist(a, np.zeros((n, 1))), cost)
    assert abs(plan.value - 1.0) < 1e-12


def test_input_validation():
    a = DiscreteDist(np.array([0.5, 0.5]), np.zeros((2, 1)))
    with pytest.raises(OTError):
        exact_ot(a, a, np.ones((2, 3)))  # wrong cost shape
    with pytest.raises(OTError):
        exact_ot(a, a, np.array([[1.0, np.inf], [0.0, 1.0]]))
    big = DiscreteDist(np.full(25, 1 / 25), np.zeros((25, 1)))
    with pytest.raises(OTError):
        exact_ot(big, big, np.ones((25, 25)))  # 625 cells > oracle scale
    with pytest.raises(OTError):
        DiscreteDist(np.array([0.7, 0.7]), np.zeros((2, 1)))  # not a prob vector
    with pytest.raises(OTError):
        DiscreteDist(np.array([1.5, -0.5]), np.zeros((2, 1)))  # negative mass


def test_cost_matrix_matches_direct_expansion():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(5, 3))
    b = rng.normal(size=(4, 3))
    assert np.allclose(cost_matrix(a, b), pairwise_sq(a, b), atol=1e-10)
    assert np.allclose(cost_matrix(a, b, "euclidean") ** 2, pairwise_sq(a, b), atol=1e-10)
    with pytest.raises(OTError):
        cost_matrix(a, b, "manhattan")


def test_plan_from_matrix_records_marginals():
    m = np.array([[0.25, 0.25], [0.0, 0.5]])
    cost = np.array([[1.0, 2.0], [3.0, 4.0]])
    plan = TransportPlan.from_matrix(m, cost)
    assert np.allclose(plan.row_marginal, [0.5, 0.5])
    assert np.allclose(plan.col_marginal, [0.25, 0.75])
    assert abs(plan.value - (0.25 + 0.5 + 2.0)) < 1e-14
