import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wotlab.errors import UsageError
from wotlab.services.costs import Barycentric, ClassicalLinear, ICXPositivePart, MartingaleIndicator, SubmartingaleIndicator
from wotlab.services.hulls import Theta
from wotlab.services.measures import DiscreteMeasure
from wotlab.services.orders import sample_dilation
from wotlab.services.primal_solver import objective_on, solve_primal, solve_primal_exhaustive


def test_strassen_pair_has_a_martingale_coupling(delta0, symmetric_pair, opts):
    result = solve_primal(delta0, symmetric_pair, MartingaleIndicator(), opts)
    assert result.value == pytest.approx(0.0, abs=1e-9)
    assert result.status == "optimal"
    assert result.method == "constrained_lp"
    assert np.allclose(result.coupling.matrix, [[0.5, 0.5]])


def test_missing_martingale_coupling_is_certified(delta0, delta1, opts):
    result = solve_primal(delta1, delta0, MartingaleIndicator(), opts)
    assert result.value == math.inf
    assert not result.finite
    assert result.status == "infeasible"
    assert result.certificate is not None
    assert not result.certificate.verdict
    assert result.to_dict()["coupling"] is None


def test_submartingale_needs_icx(delta0, delta1, opts):
    assert solve_primal(delta0, delta1, SubmartingaleIndicator(), opts).value == pytest.approx(0.0, abs=1e-9)
    result = solve_primal(delta1, delta0, SubmartingaleIndicator(), opts)
    assert result.value == math.inf
    assert result.certificate.order == "icx"


def test_classical_costs(delta0, symmetric_pair, opts):
    assert solve_primal(delta0, symmetric_pair, ClassicalLinear("abs_y"), opts).value == pytest.approx(1.0)
    both = DiscreteMeasure.create([0.0, 1.0], [0.5, 0.5])
    result = solve_primal(both, both, ClassicalLinear("neg_product"), opts)
    assert result.value == pytest.approx(-0.5)
    assert result.method == "transport_lp"
    assert np.allclose(result.coupling.matrix, np.diag([0.5, 0.5]), atol=1e-9)


def test_barycentric_kantorovich_rubinstein(opts):
    mu = DiscreteMeasure.create([0.0, 2.0], [0.5, 0.5])
    nu = DiscreteMeasure.create([1.0, 3.0], [0.5, 0.5])
    result = solve_primal(mu, nu, Barycentric(Theta.norm(1)), opts)
    assert result.value == pytest.approx(1.0, abs=1e-7)
    assert objective_on(result.coupling, Barycentric(Theta.norm(1)), opts) == pytest.approx(result.value, abs=1e-7)


def test_icx_positive_part(delta0, delta1, opts):
    assert solve_primal(delta1, delta0, ICXPositivePart(1.0), opts).value == pytest.approx(1.0)
    assert solve_primal(delta0, delta1, ICXPositivePart(1.0), opts).value == pytest.approx(0.0, abs=1e-9)


def test_quadratic_barycentric_matches_exhaustive(opts):
    mu = DiscreteMeasure.create([-1.0, 0.5], [0.4, 0.6])
    nu = DiscreteMeasure.create([-2.0, 0.0, 1.5], [0.3, 0.3, 0.4])
    cost = Barycentric(Theta.sqnorm())
    result = solve_primal(mu, nu, cost, opts)
    oracle = solve_primal_exhaustive(mu, nu, cost, opts)
    assert result.value == pytest.approx(oracle.value, abs=1e-5)
    assert objective_on(result.coupling, cost, opts) == pytest.approx(result.value, abs=1e-5)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_linear_costs_match_vertex_enumeration(seed, opts):
    rng = np.random.default_rng(seed)
    mu = DiscreteMeasure.create(np.round(rng.uniform(-2, 2, 3), 2), rng.dirichlet(np.ones(3)), normalize=True)
    nu = DiscreteMeasure.create(np.round(rng.uniform(-2, 2, 3), 2), rng.dirichlet(np.ones(3)), normalize=True)
    cost = ClassicalLinear("sqdist")
    assert solve_primal(mu, nu, cost, opts).value == pytest.approx(solve_primal_exhaustive(mu, nu, cost, opts).value, abs=1e-7)


def test_usage_errors(delta0, opts):
    with pytest.raises(UsageError):
        solve_primal(delta0, DiscreteMeasure.dirac([0.0, 0.0]), MartingaleIndicator(), opts)
    big = DiscreteMeasure.create(np.arange(5.0))
    with pytest.raises(UsageError):
        solve_primal_exhaustive(big, big, Barycentric(Theta.norm(1)), opts)
    with pytest.raises(UsageError):
        solve_primal_exhaustive(delta0, delta0, MartingaleIndicator(), opts)


def _random_pair(rng, atoms=3):
    mu = DiscreteMeasure.create(np.round(rng.uniform(-2, 2, atoms), 1), rng.dirichlet(np.ones(atoms)), normalize=True)
    nu = DiscreteMeasure.create(np.round(rng.uniform(-2, 2, atoms), 1), rng.dirichlet(np.ones(atoms)), normalize=True)
    return mu, nu


@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
@settings(max_examples=20, deadline=None)
def test_value_is_monotone_in_the_cost(seed):
    mu, nu = _random_pair(np.random.default_rng(seed))
    # (x - m)^+ <= |x - m| <= rho(|x - .|)
    chain = [Barycentric(Theta.pospart(1.0)), Barycentric(Theta.norm(1)), ClassicalLinear("dist")]
    values = [solve_primal(mu, nu, cost).value for cost in chain]
    assert values[0] <= values[1] + 1e-9
    assert values[1] <= values[2] + 1e-9


@given(st.integers(min_value=0, max_value=2 ** 32 - 1), st.sampled_from(["norm1", "sqnorm"]))
@settings(max_examples=20, deadline=None)
def test_dilating_the_target_never_raises_the_value(seed, theta):
    rng = np.random.default_rng(seed)
    mu, nu = _random_pair(rng)
    wider = sample_dilation(nu, "cx", rng)
    cost = Barycentric(Theta.norm(1) if theta == "norm1" else Theta.sqnorm())
    assert solve_primal(mu, wider, cost).value <= solve_primal(mu, nu, cost).value + 1e-5
