import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wotlab.errors import NumericalFailure, OrderViolation, UsageError
from wotlab.services import orders
from wotlab.services.hulls import GridFunction, MaxAffinePotential, convex_hull
from wotlab.services.measures import DiscreteMeasure
from wotlab.services.orders import (
    ConeSpec,
    Generator,
    check_cone_order,
    check_convex_order,
    check_icx_order,
    cone_hull,
    dilation_kernel,
    row_dominates,
    sample_dilation,
    validate_certificate,
)
from wotlab.services.verification import random_measure


def test_strassen_pair_is_ordered(delta0, symmetric_pair, opts):
    cert = check_convex_order(delta0, symmetric_pair, opts)
    assert cert.verdict
    row = cert.witness_kernel.row_for([0.0])
    assert np.allclose(row.weights_on(symmetric_pair.points), [0.5, 0.5])
    assert validate_certificate(cert, delta0, symmetric_pair, ConeSpec.convex())


def test_shifted_pair_fails_with_linear_certificate(delta0, delta1, opts):
    cert = check_convex_order(delta1, delta0, opts)
    assert not cert.verdict
    f = cert.separating_function
    assert cert.margin > opts.margin_tol
    assert f.at([1.0]) - f.at([0.0]) == pytest.approx(cert.margin)
    assert validate_certificate(cert, delta1, delta0, ConeSpec.convex())
    with pytest.raises(OrderViolation) as info:
        dilation_kernel(delta1, delta0, ConeSpec.convex(), opts)
    assert info.value.certificate.margin == pytest.approx(cert.margin)


def test_icx_presets(delta0, delta1, opts):
    assert check_icx_order(delta0, delta1, opts).verdict
    cert = check_icx_order(delta1, delta0, opts)
    assert not cert.verdict
    assert np.all(cert.separating_function.slopes >= 0)


def test_one_dimensional_cones_agree_with_mean_rows(opts, rng):
    for _ in range(10):
        r1 = DiscreteMeasure.create(np.round(rng.uniform(-3, 3, 3), 1), rng.dirichlet(np.ones(3)), normalize=True)
        r2 = DiscreteMeasure.create(np.round(rng.uniform(-3, 3, 4), 1), rng.dirichlet(np.ones(4)), normalize=True)
        assert check_cone_order(r1, r2, ConeSpec.convex1d(), opts).verdict == check_convex_order(r1, r2, opts).verdict
        assert check_cone_order(r1, r2, ConeSpec.icx1d(), opts).verdict == check_icx_order(r1, r2, opts).verdict


def test_custom_cone_certificate(delta0, opts):
    cone = ConeSpec.custom([Generator.affine([1.0])])
    half = DiscreteMeasure.dirac(0.5)
    assert check_cone_order(delta0, half, cone, opts).verdict
    cert = check_cone_order(half, delta0, cone, opts)
    assert not cert.verdict
    assert cert.margin == pytest.approx(0.5 * cert.separating_function.coefs.max(), rel=1e-6)
    assert validate_certificate(cert, half, delta0, cone)


def test_two_dimensional_cross(opts):
    origin = DiscreteMeasure.dirac([0.0, 0.0])
    cross = DiscreteMeasure.uniform([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    assert check_convex_order(origin, cross, opts).verdict
    assert not check_convex_order(cross, origin, opts).verdict


def test_dimension_mismatch(delta0, opts):
    with pytest.raises(UsageError):
        check_convex_order(delta0, DiscreteMeasure.dirac([0.0, 0.0]), opts)


def test_row_dominates_modes():
    row = DiscreteMeasure.create([-1.0, 1.0], [0.5, 0.5])
    assert row_dominates([0.0], row, ConeSpec.convex())
    assert not row_dominates([0.5], row, ConeSpec.convex())
    assert row_dominates([-0.5], row, ConeSpec.icx())


def test_near_tie_resolves_to_degenerate_true(delta0, opts):
    nu = DiscreteMeasure.create([-1.0, 1.0 + 1e-7], [0.5, 0.5])
    cert = check_convex_order(delta0, nu, opts.model_copy(update={"margin_tol": 1e-6}))
    assert cert.verdict
    assert cert.degenerate
    assert cert.witness_kernel is not None
    assert not check_convex_order(delta0, nu, opts).verdict


def test_rounded_two_dimensional_dilation_is_ordered(opts):
    rng = np.random.default_rng(9299332778611818835)
    r1 = random_measure(rng, 2, max_atoms=4)
    assert rng.random() < 0.5
    wider = r1
    for _ in range(2):
        wider = sample_dilation(wider, "cx", rng)
    r2 = DiscreteMeasure.create(np.round(wider.points, 6), wider.weights, normalize=True)
    cert = check_convex_order(r1, r2, opts)
    assert cert.verdict
    assert cert.witness_kernel is not None


def test_negative_margin_is_a_numerical_failure(delta0, delta1, opts, monkeypatch):
    monkeypatch.setattr(orders, "_separating_function", lambda *args: MaxAffinePotential([[-1.0]], [0.0]))
    with pytest.raises(NumericalFailure):
        check_icx_order(delta1, delta0, opts)


def test_cone_hull_matches_convex_hull(opts):
    grid = np.array([[-2.0], [-1.0], [0.0], [1.0], [2.0]])
    f = GridFunction(grid, [1.0, -1.0, 2.0, 0.0, 4.0])
    hull, potential = cone_hull(f, ConeSpec.convex(), opts)
    assert np.allclose(hull.values, convex_hull(f).values)
    assert np.allclose(potential(grid), hull.values)
    generic, function = cone_hull(f, ConeSpec.convex1d(), opts)
    assert np.allclose(generic.values, hull.values, atol=1e-8)
    assert np.all(function.coefs >= 0)


def test_generator_dict_roundtrip():
    g = Generator.from_table([[0.0], [1.0]], [0.0, 2.0])
    assert Generator.from_dict(g.to_dict()) == g
    with pytest.raises(UsageError):
        g([[0.5]])


@given(st.integers(min_value=0, max_value=2 ** 32 - 1), st.sampled_from(["cx", "icx"]))
@settings(max_examples=25, deadline=None)
def test_sampled_dilations_are_dominating(seed, order):
    rng = np.random.default_rng(seed)
    rho = DiscreteMeasure.create(np.round(rng.uniform(-3, 3, 3), 2), rng.dirichlet(np.ones(3)), normalize=True)
    wider = sample_dilation(rho, order, rng)
    cone = ConeSpec.convex() if order == "cx" else ConeSpec.icx()
    cert = check_cone_order(rho, wider, cone)
    assert cert.verdict
