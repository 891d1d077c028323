import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wotlab.config import SolverOptions
from wotlab.errors import NumericalFailure, UsageError
from wotlab.services.optim_core import (
    EQ,
    GE,
    LE,
    LinExpr,
    LinearProgram,
    ProgramBuilder,
    cutting_plane_max,
    frank_wolfe,
    lexicographic_polish,
    solve_lp,
    validate_farkas,
)


def _lp(A, b, senses, c=(1.0,)):
    n = len(c)
    return LinearProgram(c=np.array(c), A=np.array(A, dtype=float), b=np.array(b, dtype=float),
                         senses=np.array(senses, dtype=object), lower=np.full(n, -np.inf), upper=np.full(n, np.inf))


def test_linexpr_arithmetic():
    e = 2.0 * LinExpr.var(0) - LinExpr.total([0, 1], [1.0, 3.0]) + 4.0
    assert e.terms == {0: 1.0, 1: -3.0}
    assert e.const == 4.0
    assert e.value(np.array([1.0, 1.0])) == 2.0


def test_lp_optimum_and_duals(opts):
    sol = solve_lp(_lp([[1.0]], [3.0], [GE]), opts)
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(3.0)
    assert sol.duals[0] == pytest.approx(1.0)


def test_lp_infeasible_with_farkas(opts):
    lp = _lp([[1.0], [1.0]], [0.0, 1.0], [LE, GE])
    sol = solve_lp(lp, opts)
    assert sol.status == "infeasible"
    assert sol.value == math.inf
    assert sol.farkas.margin == pytest.approx(1.0)
    assert validate_farkas(lp, sol.farkas)


def test_lp_rows_infeasible_within_margin(opts):
    lp = _lp([[1.0], [1.0]], [1.0, 1.0 + 1e-7], [EQ, EQ])
    assert solve_lp(lp, opts).status == "infeasible"
    loose = opts.model_copy(update={"margin_tol": 1e-6})
    with pytest.raises(NumericalFailure):
        solve_lp(lp, loose)
    sol = solve_lp(lp, loose, allow_near_feasible=True)
    assert sol.status == "near_feasible"
    assert sol.infeasibility == pytest.approx(1e-7, rel=1e-3)
    assert sol.x[0] == pytest.approx(1.0, abs=1e-6)
    assert sol.value == pytest.approx(sol.x[0])


def test_lp_unbounded(opts):
    sol = solve_lp(_lp([[1.0]], [3.0], [LE]), opts)
    assert sol.status == "unbounded"
    assert sol.value == -math.inf


def test_lp_rejects_inconsistent_shapes():
    with pytest.raises(UsageError):
        _lp([[1.0]], [1.0], [LE, LE])


def test_builder_frank_wolfe_quadratic(opts):
    builder = ProgramBuilder()
    x = builder.add_variables(2)
    builder.add_row(LinExpr.total(x), EQ, 1.0)
    builder.add_quadratic([LinExpr.var(x[0]) - 0.3], 1.0)
    sol = builder.solve(opts)
    assert sol.method == "frank_wolfe"
    assert sol.converged
    assert sol.value == pytest.approx(0.0, abs=1e-9)
    assert sol.x[x[0]] == pytest.approx(0.3, abs=1e-6)


def _random_quadratic(seed):
    rng = np.random.default_rng(seed)
    builder = ProgramBuilder()
    x = builder.add_variables(5)
    builder.add_row(LinExpr.total(x), EQ, 1.0)
    M = rng.normal(size=(3, 5))
    target = rng.uniform(-1.0, 1.0, 3)
    builder.add_quadratic([LinExpr.total(x, M[k]) - target[k] for k in range(3)], 1.0)
    builder.add_objective(LinExpr.total(x, rng.normal(size=5)))
    return builder.build()


@given(st.integers(min_value=0, max_value=2 ** 32 - 1), st.booleans())
@settings(max_examples=25, deadline=None)
def test_frank_wolfe_history_never_increases(seed, corrective):
    fw = frank_wolfe(_random_quadratic(seed), SolverOptions(tol=1e-9), fully_corrective=corrective)
    assert np.all(np.diff(fw.history) <= 0.0)
    assert fw.value == fw.history[-1]
    assert 1 <= fw.active_set <= 5


def test_frank_wolfe_rejected_step_leaves_active_set(opts, monkeypatch):
    builder = ProgramBuilder()
    x = builder.add_variables(2)
    builder.add_row(LinExpr.total(x), EQ, 1.0)
    builder.add_quadratic([LinExpr.var(x[0]) - 0.3], 1.0)
    oracle = builder.build()
    exact = oracle.curvature
    # a third of the curvature makes the line search overshoot to x0 = 0.9
    monkeypatch.setattr(oracle, "curvature", lambda d: exact(d) / 3.0)
    fw = frank_wolfe(oracle, opts, start=np.array([0.0, 1.0]), fully_corrective=False)
    assert fw.history == [pytest.approx(0.09), pytest.approx(0.09)]
    assert fw.x.tolist() == [0.0, 1.0]
    assert fw.active_set == 1
    assert not fw.converged


def test_builder_rejects_negative_quadratic_weight():
    with pytest.raises(UsageError):
        ProgramBuilder().add_quadratic([LinExpr.var(0)], -1.0)


def test_lexicographic_polish_breaks_ties(opts):
    # every split of unit mass costs 1; the polish prefers the second variable
    builder = ProgramBuilder()
    x = builder.add_variables(2)
    builder.add_row(LinExpr.total(x), EQ, 1.0)
    builder.add_objective(LinExpr.total(x))
    sol = builder.solve(opts)
    polished = lexicographic_polish(builder.build(), sol.x, sol.value, np.array([1.0, 0.0]), 1e-9, opts)
    assert polished[x[1]] == pytest.approx(1.0)


def test_cutting_plane_on_concave_kink(opts):
    res = cutting_plane_max(lambda t: (-abs(t[0]), np.array([-np.sign(t[0])])), np.array([-5.0]), np.array([5.0]), opts)
    assert res.converged
    assert res.value == pytest.approx(0.0, abs=1e-9)


def test_cutting_plane_on_tent(opts):
    def tent(t):
        v = min(t[0], 1.0 - t[0])
        return v, np.array([1.0 if t[0] < 1.0 - t[0] else -1.0])

    res = cutting_plane_max(tent, np.array([-2.0]), np.array([3.0]), opts)
    assert res.converged
    assert res.value == pytest.approx(0.5, abs=1e-6)
    assert res.argmax[0] == pytest.approx(0.5, abs=1e-6)
