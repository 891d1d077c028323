import math

import numpy as np
import pytest

from wotlab.errors import UsageError
from wotlab.services import dual_solver
from wotlab.services.costs import Barycentric, ClassicalLinear, ICXPositivePart, MartingaleIndicator, NegativeMCov
from wotlab.services.dual_solver import (
    attainment_witness,
    c_conjugate,
    declared_monotone,
    duality_gap,
    legendre_pair,
    lipschitz_renormalize,
    resolve_class,
    solve_dual,
    verify_hull_stability,
)
from wotlab.services.hulls import GridFunction, MaxAffinePotential, Theta, convex_hull
from wotlab.services.measures import DiscreteMeasure
from wotlab.services.orders import ConeSpec, sample_dilation
from wotlab.services.primal_solver import solve_primal
from wotlab.services.verification import random_measure


def test_resolve_class():
    assert resolve_class("convex") == ("convex", ConeSpec.convex())
    assert resolve_class(ConeSpec.icx())[0] == "icx"
    assert resolve_class(ConeSpec.convex1d())[0] == "convex"
    with pytest.raises(UsageError):
        resolve_class("lipschitz")


def test_declared_monotone():
    assert declared_monotone(Barycentric(Theta.norm(1)), "convex")
    assert not declared_monotone(Barycentric(Theta.norm(1)), "icx")
    assert declared_monotone(ICXPositivePart(1.0), ConeSpec.icx())
    assert not declared_monotone(ClassicalLinear("abs_y"), "convex")


def test_strict_mode_rejects_undeclared_costs(delta0, symmetric_pair, opts):
    with pytest.raises(UsageError):
        solve_dual(delta0, symmetric_pair, ClassicalLinear("abs_y"), "convex", opts)


def test_converse_gap(delta0, symmetric_pair, opts):
    # |y| is convex in y, so every convex psi leaves the dual at zero
    result = solve_dual(delta0, symmetric_pair, ClassicalLinear("abs_y"), "convex", opts, strict=False)
    assert result.value <= 1e-8
    report = duality_gap(delta0, symmetric_pair, ClassicalLinear("abs_y"), "convex", opts)
    assert report.primal == pytest.approx(1.0)
    assert report.gap >= 1.0 - 1e-6
    assert not report.monotone
    assert report.weak_duality


def test_icx_positive_part_dual(delta0, delta1, opts):
    result = solve_dual(delta1, delta0, ICXPositivePart(1.0), "icx", opts)
    assert result.value == pytest.approx(1.0, abs=1e-6)
    assert result.dual_class == "icx"
    assert attainment_witness(result, delta0, n_probes=30, seed=1, opts=opts).ok


def test_classical_neg_product(opts):
    both = DiscreteMeasure.create([0.0, 1.0], [0.5, 0.5])
    result = solve_dual(both, both, ClassicalLinear("neg_product"), "convex", opts)
    assert result.value == pytest.approx(-0.5, abs=1e-6)
    pair = legendre_pair(result)
    assert pair.value == pytest.approx(result.value, abs=1e-9)
    assert pair.max_fenchel_violation <= 1e-7
    with pytest.raises(UsageError):
        legendre_pair(solve_dual(both, both, Barycentric(Theta.norm(1)), "convex", opts))


def test_martingale_dual_is_unbounded_without_order(delta0, delta1, opts):
    result = solve_dual(delta1, delta0, MartingaleIndicator(), "convex", opts)
    assert result.value == math.inf
    assert result.method == "order_certificate"
    # the separating function is affine with slope of the mean shift
    assert result.potential([[1.0]])[0] - result.potential([[0.0]])[0] > 0


def test_strassen_dual_matches_primal(delta0, symmetric_pair, opts):
    result = solve_dual(delta0, symmetric_pair, MartingaleIndicator(), "convex", opts)
    assert result.value == pytest.approx(0.0, abs=1e-7)
    assert result.converged


@pytest.mark.parametrize(
    "cost, dual_class",
    [
        (Barycentric(Theta.norm(1)), "convex"),
        (Barycentric(Theta.sqnorm()), "convex"),
        (ICXPositivePart(1.0), "icx"),
    ],
)
def test_gap_closes_for_monotone_costs(cost, dual_class, opts):
    mu = DiscreteMeasure.create([0.0, 2.0], [0.5, 0.5])
    nu = DiscreteMeasure.create([-1.0, 1.0, 3.0], [0.25, 0.5, 0.25])
    report = duality_gap(mu, nu, cost, dual_class, opts)
    assert report.monotone
    assert abs(report.gap) <= 1e-5 * (1.0 + abs(report.primal))


def test_kantorovich_rubinstein_renormalisation(opts):
    mu = DiscreteMeasure.create([0.0, 2.0], [0.5, 0.5])
    nu = DiscreteMeasure.create([1.0, 3.0], [0.5, 0.5])
    result = solve_dual(mu, nu, Barycentric(Theta.norm(1)), "convex", opts)
    assert result.value == pytest.approx(1.0, abs=1e-5)
    renormalized = lipschitz_renormalize(result, opts)
    assert renormalized.value >= result.value - 1e-8
    assert renormalized.potential.lipschitz(math.inf) <= 1.0 + 1e-7
    with pytest.raises(UsageError):
        lipschitz_renormalize(solve_dual(mu, nu, ClassicalLinear("neg_product"), "convex", opts), opts)


def test_c_conjugate_of_linear_potential(opts):
    grid = np.array([[-1.0], [0.0], [1.0]])
    psi = MaxAffinePotential(np.array([[1.0]]), np.array([0.0]))
    # inf over rho of rho(psi) + |x - mean rho| is attained at mean rho = x
    assert c_conjugate(psi, Barycentric(Theta.norm(1)), [0.5], grid, opts) == pytest.approx(0.5)


def test_hull_stability(opts):
    grid = np.array([[-1.0], [0.0], [1.0]])
    psi = GridFunction(grid, [-1.0, 0.0, -1.0])
    assert verify_hull_stability(psi, Barycentric(Theta.norm(1)), [[-1.0], [0.0], [0.5]], "cx", opts=opts).ok
    report = verify_hull_stability(psi, ClassicalLinear("abs_y"), [[0.0]], "cx", opts=opts)
    assert not report.ok
    assert report.max_deviation > 0


def test_hull_stability_conjugates_the_raw_potential(opts, monkeypatch):
    seen = []
    original = dual_solver._lower_hull_1d

    def spy(xs, ys):
        seen.append(tuple(ys))
        return original(xs, ys)

    monkeypatch.setattr(dual_solver, "_lower_hull_1d", spy)
    psi = GridFunction(np.array([[-1.0], [0.0], [1.0]]), [-1.0, 0.0, -1.0])
    report = verify_hull_stability(psi, MartingaleIndicator(), [[-0.5], [0.0], [0.5]], "cx", opts=opts)
    assert report.ok
    assert seen
    assert (-1.0, 0.0, -1.0) not in seen


def _nonconvex_potential(rng):
    while True:
        n = int(rng.integers(4, 11))
        grid = np.unique(np.round(rng.uniform(-3.0, 3.0, size=(n, 1)), 2), axis=0)
        psi = GridFunction(grid, np.round(rng.normal(size=len(grid)) * 2.0, 3))
        if np.max(psi.values - convex_hull(psi, opts=None).values) > 1e-3:
            return psi


def _stability_batch(n_potentials, cost, opts, seed=11):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_potentials):
        psi = _nonconvex_potential(rng)
        xs = rng.uniform(-3.0, 3.0, size=(20, 1))
        report = verify_hull_stability(psi, cost, xs, "cx", tol=1e-6, opts=opts)
        assert report.ok, report.violations
        worst = max(worst, report.max_deviation)
    return worst


STABLE_COSTS = [MartingaleIndicator, lambda: Barycentric(Theta.sqnorm())]


@pytest.mark.parametrize("make_cost", STABLE_COSTS, ids=["martingale", "barycentric_sq"])
def test_hull_stability_random_potentials(make_cost, opts):
    assert _stability_batch(5, make_cost(), opts.model_copy(update={"tol": 1e-9})) <= 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("make_cost", STABLE_COSTS, ids=["martingale", "barycentric_sq"])
def test_hull_stability_full_batch(make_cost, opts):
    assert _stability_batch(50, make_cost(), opts.model_copy(update={"tol": 1e-9}), seed=2024) <= 1e-6


def test_dual_result_serialises(delta0, symmetric_pair, opts):
    data = solve_dual(delta0, symmetric_pair, Barycentric(Theta.sqnorm()), "convex", opts).to_dict()
    assert data["class"] == "convex"
    assert set(data) >= {"value", "potential", "conjugate_values", "upper_bound", "converged"}


def _mcov_gap(seed, opts):
    rng = np.random.default_rng(seed)
    mu = random_measure(rng, 1, max_atoms=5, decimals=1)
    nu = sample_dilation(mu, "cx", rng)
    cost = NegativeMCov(gauss_nodes=16)
    primal = solve_primal(mu, nu, cost, opts).value
    dual = solve_dual(mu, nu, cost, "convex", opts)
    assert math.isfinite(primal)
    return abs(primal - dual.value) / (1.0 + abs(primal))


@pytest.mark.parametrize("seed", [0, 1])
def test_martingale_benamou_brenier_gap_closes(seed, opts):
    assert _mcov_gap(seed, opts) <= 1e-4


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10))
def test_martingale_benamou_brenier_seeded_pairs(seed, opts):
    assert _mcov_gap(100 + seed, opts) <= 1e-4
