import numpy as np
import pytest

from wotlab.config import SolverOptions
from wotlab.errors import UsageError
from wotlab.services.costs import Barycentric, HullCost, ICXPositivePart
from wotlab.services.hulls import Theta
from wotlab.services.measures import DiscreteMeasure
from wotlab.services.orders import ConeSpec, check_convex_order
from wotlab.services.projection import monotone_hull_cost, project_order, verify_three_way


def test_brenier_strassen_fixture(symmetric_pair):
    # eta = delta_0 sits between the two points of nu, so the grid needs refinement
    opts = SolverOptions(grid_refine=1)
    mu = DiscreteMeasure.dirac(2.0)
    result = project_order(mu, symmetric_pair, Barycentric(Theta.sqnorm()), "cx", opts)
    lhs, mid, rhs = result.three_values
    assert lhs == pytest.approx(4.0, abs=1e-6)
    assert mid == pytest.approx(4.0, abs=1e-6)
    assert rhs == pytest.approx(4.0, abs=1e-5)
    assert result.eta.size == 1
    assert result.eta.points[0, 0] == pytest.approx(0.0, abs=1e-9)
    assert check_convex_order(result.eta, symmetric_pair, opts).verdict
    assert np.allclose(result.composed.matrix, [[0.5, 0.5]])


def test_identical_marginals_project_to_themselves(opts):
    mu = DiscreteMeasure.create([-1.0, 0.5, 2.0], [0.2, 0.5, 0.3])
    result = project_order(mu, mu, Barycentric(Theta.sqnorm()), ConeSpec.convex(), opts)
    assert max(abs(v) for v in result.three_values) <= 1e-6
    assert result.max_discrepancy <= 1e-6


def test_icx_projection_agrees(opts):
    mu = DiscreteMeasure.create([0.0, 2.0], [0.5, 0.5])
    nu = DiscreteMeasure.create([-1.0, 1.0], [0.5, 0.5])
    report = verify_three_way(mu, nu, ICXPositivePart(1.0), ConeSpec.icx(), opts=opts)
    assert report.ok
    assert report.eta_dominated
    assert report.to_dict()["max_discrepancy"] <= 1e-5


def test_result_serialises(delta0, symmetric_pair, opts):
    data = project_order(delta0, symmetric_pair, Barycentric(Theta.norm(1)), "cx", opts).to_dict()
    assert data["three_values"]["lhs"] == pytest.approx(0.0, abs=1e-7)
    assert set(data) >= {"eta", "first_leg", "dilation_leg", "composed", "max_discrepancy"}


def test_monotone_hull_cost(delta0, opts):
    hull = monotone_hull_cost(Barycentric(Theta.sqnorm()), ConeSpec.convex())
    assert isinstance(hull, HullCost)
    assert hull.cx_decreasing
    rho = DiscreteMeasure.create([-1.0, 1.0], [0.5, 0.5])
    assert hull.evaluate([0.0], rho, opts) == pytest.approx(0.0, abs=1e-6)


def test_dimension_mismatch(delta0, opts):
    with pytest.raises(UsageError):
        project_order(delta0, DiscreteMeasure.dirac([0.0, 0.0]), Barycentric(Theta.sqnorm()), "cx", opts)
