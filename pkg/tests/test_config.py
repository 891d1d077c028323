import pytest

from wotlab.config import Config, SolverOptions, default_options, get_config


def test_defaults(monkeypatch):
    for name in ("WOTLAB_GAP_TOL", "WOTLAB_LP_METHOD", "WOTLAB_GAUSS_NODES", "WOTLAB_THREADS", "WOTLAB_SEED"):
        monkeypatch.delenv(name, raising=False)
    cfg = get_config()
    assert cfg.gap_tol == 1e-6
    assert cfg.lp_method == "highs-ds"
    assert cfg.gauss_nodes == 16
    assert cfg.threads == 1
    assert cfg.seed == 7


def test_invalid_choices_fall_back(monkeypatch):
    monkeypatch.setenv("WOTLAB_LP_METHOD", "simplex-by-hand")
    monkeypatch.setenv("WOTLAB_GAUSS_NODES", "12")
    monkeypatch.setenv("WOTLAB_THREADS", "0")
    cfg = Config()
    assert cfg.lp_method == "highs-ds"
    assert cfg.gauss_nodes == 16
    assert cfg.threads == 1


def test_negative_grid_refine_is_rejected(monkeypatch):
    monkeypatch.setenv("WOTLAB_GRID_REFINE", "-1")
    with pytest.raises(RuntimeError, match="Invalid configuration"):
        get_config()


def test_solver_options_overrides(monkeypatch):
    monkeypatch.setenv("WOTLAB_GAP_TOL", "1e-4")
    opts = default_options(seed=11, grid_refine=None)
    assert opts.tol == 1e-4
    assert opts.seed == 11
    assert opts.grid_refine == 0
    assert SolverOptions.from_config(Config(), tol=1e-3).tol == 1e-3
