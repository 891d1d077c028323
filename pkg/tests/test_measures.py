import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wotlab.errors import UsageError
from wotlab.services.measures import (
    Coupling,
    DiscreteMeasure,
    Kernel,
    chain,
    compose,
    disintegrate,
    mean,
    p_moment,
    union_points,
    working_grid,
)


def test_create_merges_and_prunes():
    rho = DiscreteMeasure.create([0.0, 1.0, 0.0, 2.0], [0.25, 0.5, 0.25, 0.0])
    assert rho.size == 2
    assert rho.weights_on(np.array([[0.0], [1.0]])).tolist() == [0.5, 0.5]


def test_invalid_measures():
    with pytest.raises(UsageError):
        DiscreteMeasure([[0.0], [1.0]], [0.7, 0.7])
    with pytest.raises(UsageError):
        DiscreteMeasure([[0.0], [0.0]], [0.5, 0.5])
    with pytest.raises(UsageError):
        DiscreteMeasure.create([0.0, 1.0], [1.5, -0.5])
    with pytest.raises(UsageError):
        DiscreteMeasure.create([[0.0, np.inf]], [1.0])


def test_measures_are_read_only(symmetric_pair):
    with pytest.raises(ValueError):
        symmetric_pair.weights[0] = 1.0


def test_mean_and_moment(symmetric_pair):
    assert mean(symmetric_pair).tolist() == [0.0]
    assert p_moment(symmetric_pair, 2) == pytest.approx(1.0)
    with pytest.raises(UsageError):
        p_moment(symmetric_pair, 0.5)


def test_integrate_infinite_values(symmetric_pair):
    assert symmetric_pair.integrate([np.inf, 0.0]) == np.inf
    assert symmetric_pair.integrate(lambda p: p[:, 0] ** 2) == pytest.approx(1.0)


def test_disintegrate_compose_roundtrip(symmetric_pair):
    mu = DiscreteMeasure.create([0.0, 3.0], [0.5, 0.5])
    c = Coupling.between(mu, symmetric_pair, [[0.25, 0.25], [0.25, 0.25]])
    marginal, kernel = disintegrate(c)
    again = compose(marginal, kernel)
    assert np.allclose(again.matrix, c.matrix)


def test_compose_support_mismatch(symmetric_pair, delta0):
    kernel = Kernel(np.array([[5.0]]), (symmetric_pair,))
    with pytest.raises(UsageError, match="support mismatch"):
        compose(delta0, kernel)


def test_coupling_between_checks_marginals(delta0, symmetric_pair):
    with pytest.raises(UsageError):
        Coupling.between(delta0, symmetric_pair, [[0.9, 0.1]])
    assert Coupling.product(delta0, symmetric_pair).matrix.tolist() == [[0.5, 0.5]]


def test_repaired_rescales_round_off(delta0, symmetric_pair):
    c = Coupling.repaired(delta0, symmetric_pair, [[0.5 + 1e-12, 0.5 - 3e-12]])
    assert np.allclose(c.matrix.sum(axis=0), [0.5, 0.5], atol=1e-14)


def test_chain_through_intermediate(symmetric_pair):
    mu = DiscreteMeasure.dirac(2.0)
    eta = DiscreteMeasure.dirac(0.0)
    first = Coupling.between(mu, eta, [[1.0]])
    kernel = Kernel(eta.points, (symmetric_pair,))
    composed = chain(first, kernel)
    assert composed.matrix.tolist() == [[0.5, 0.5]]
    assert composed.second_support[:, 0].tolist() == [-1.0, 1.0]


def test_working_grid_refinement(delta0, symmetric_pair):
    assert working_grid(delta0, symmetric_pair)[:, 0].tolist() == [-1.0, 0.0, 1.0]
    assert working_grid(DiscreteMeasure.dirac(2.0), symmetric_pair, refine=1)[:, 0].tolist() == [-1.0, 0.0, 1.0, 1.5, 2.0]


def test_union_points_needs_atoms():
    with pytest.raises(UsageError):
        union_points(None)


@given(st.lists(st.floats(min_value=-3, max_value=3, allow_nan=False), min_size=1, max_size=6),
       st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=6, max_size=6))
@settings(max_examples=50, deadline=None)
def test_normalized_measures_have_unit_mass(points, weights):
    rho = DiscreteMeasure.create(points, weights[: len(points)], normalize=True)
    assert rho.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert rho.size == len(set(points))
