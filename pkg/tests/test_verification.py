import numpy as np
import pytest

from wotlab.errors import UsageError
from wotlab.services.measures import DiscreteMeasure
from wotlab.services.verification import DUALITY_COSTS, SUITES, case_seeds, run_suite, run_verification, sampled_violation


def test_case_seeds_are_deterministic():
    assert case_seeds(7, 4) == case_seeds(7, 4)
    assert case_seeds(7, 4)[:2] == case_seeds(7, 2)
    assert case_seeds(7, 4) != case_seeds(8, 4)


@pytest.mark.parametrize("suite", SUITES)
def test_small_batches_pass(suite, opts):
    report = run_suite(suite, 2, seed=7, opts=opts, threads=1)
    assert report.n == 2
    assert report.ok, report.failures


def test_reports_are_reproducible(opts):
    first = [r.to_dict() for r in run_verification("hulls", 3, 11, opts, threads=2)]
    second = [r.to_dict() for r in run_verification("hulls", 3, 11, opts, threads=1)]
    assert first == second


def test_all_runs_every_suite(opts):
    reports = run_verification("all", 1, 3, opts, threads=1)
    assert [r.suite for r in reports] == list(SUITES)


def test_sampled_violation_sees_two_dimensional_failures():
    rng = np.random.default_rng(3)
    origin = DiscreteMeasure.dirac([0.0, 0.0])
    shifted = DiscreteMeasure.dirac([0.0, 0.1])
    spread = DiscreteMeasure.create([[-1.0, 0.5], [1.0, -0.5]], [0.5, 0.5])
    assert sampled_violation(origin, shifted, "cx", rng) >= 0.1 - 1e-12
    assert sampled_violation(spread, origin, "cx", rng) >= 0.5 - 1e-12
    assert sampled_violation(origin, spread, "cx", rng) <= 1e-12
    assert sampled_violation(shifted, origin, "icx", rng) >= 0.1 - 1e-12


def test_duality_costs_cover_martingale_benamou_brenier():
    names = {make().name for make, *_ in DUALITY_COSTS}
    assert {"neg_mcov", "relaxed_mbb"} <= names


@pytest.mark.slow
def test_duality_suite_runs_every_cost(opts):
    report = run_suite("duality", 2 * len(DUALITY_COSTS), seed=17, opts=opts)
    assert report.ok, report.failures


def test_invalid_requests(opts):
    with pytest.raises(UsageError):
        run_suite("spectra", 1, 0, opts)
    with pytest.raises(UsageError):
        run_suite("hulls", 0, 0, opts)


@pytest.mark.slow
@pytest.mark.parametrize("suite", SUITES)
def test_full_batches(suite, opts):
    report = run_suite(suite, 30, seed=2024, opts=opts)
    assert report.ok, report.failures
