import json
import math

import pytest
from pydantic import ValidationError

from wotlab.errors import UsageError
from wotlab.models import SCHEMA_VERSION, InstanceSpec, Report
from wotlab.repositories import InstancesRepository, ReportsRepository, ScenariosRepository
from wotlab.services.costs import Barycentric, ClassicalLinear
from wotlab.services.measures import mean
from wotlab.services.orders import ConeSpec


def _write(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_instance_with_relative_measure_files(tmp_path):
    _write(tmp_path / "mu.json", {"points": [0.0], "weights": [1.0]})
    _write(tmp_path / "nu.json", {"points": [-1.0, 1.0], "weights": [0.5, 0.5]})
    _write(tmp_path / "inst.json", {
        "schema": SCHEMA_VERSION,
        "mu": "mu.json",
        "nu": "nu.json",
        "cost": {"cost": "martingale"},
        "opts": {"grid_refine": 1},
    })
    inst = InstancesRepository().instance(tmp_path / "inst.json")
    assert inst.name == "inst"
    assert inst.mu.size == 1
    assert mean(inst.nu).tolist() == [0.0]
    assert inst.dual_class == "convex"
    assert inst.cone == ConeSpec.convex()
    assert inst.option_overrides() == {"grid_refine": 1}


def test_inline_references():
    repo = InstancesRepository()
    assert repo.measure('{"points": [[1.0, 2.0]]}').dim == 2
    assert repo.measure({"points": [0.0, 1.0]}).weights.tolist() == [0.5, 0.5]
    assert repo.cone("icx") == ConeSpec.icx()
    assert repo.cone({"family": "convex1d", "knots": [0.0, 1.0]}).knots == (0.0, 1.0)
    assert isinstance(repo.cost({"cost": "classical", "params": {"formula": "abs_y"}}), ClassicalLinear)
    assert repo.dual_class("icx") == "icx"
    potential = repo.potential({"pieces": [{"slope": 1.0, "intercept": 0.0}, {"slope": -1.0, "intercept": 0.0}]})
    assert potential([[-2.0]])[0] == pytest.approx(2.0)
    assert repo.grid_function({"support": [0.0, 1.0], "values": [0.0, "inf"]}).values[1] == math.inf


def test_repository_errors(tmp_path):
    repo = InstancesRepository(tmp_path)
    with pytest.raises(UsageError):
        repo.measure("missing.json")
    (tmp_path / "broken.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(UsageError):
        repo.measure("broken.json")
    with pytest.raises(UsageError):
        repo.measure("{oops")
    with pytest.raises(ValidationError):
        repo.measure({"points": [[0.0], [1.0, 2.0]]})
    with pytest.raises(ValidationError):
        repo.measure({"points": [0.0, 1.0], "weights": [1.0]})
    with pytest.raises(ValidationError):
        repo.cost({"cost": "entropic"})


def test_instance_validation(tmp_path):
    base = {"mu": {"points": [0.0]}, "nu": {"points": [[0.0, 1.0]]}, "cost": {"cost": "martingale"}}
    with pytest.raises(ValidationError):
        InstanceSpec.model_validate({**base, "schema": "wotlab/0"})
    with pytest.raises(ValidationError):
        InstanceSpec.model_validate({**base, "opts": {"grid_refine": -1}})
    with pytest.raises(UsageError):
        InstancesRepository().from_spec(InstanceSpec.model_validate(base))


def test_bundled_scenarios():
    scenarios = ScenariosRepository()
    names = scenarios.names()
    assert {"strassen_feasible", "converse_gap", "brenier_strassen", "kr_1d"} <= set(names)
    for name in names:
        inst = scenarios.load(name)
        assert inst.name == name
        assert inst.mu.dim == inst.nu.dim
    assert isinstance(scenarios.load("kr_1d").cost, Barycentric)
    assert not scenarios.exists("nope")
    with pytest.raises(UsageError):
        scenarios.path("nope")
    assert all(entry["description"] for entry in scenarios.describe())


def test_report_rendering(tmp_path):
    report = Report(command="solve", ok=False, values={"primal": math.inf, "dual": -math.inf, "gap": 1.0 / 3.0, "z": -0.0})
    text = ReportsRepository().render(report)
    data = json.loads(text)
    assert data["schema"] == SCHEMA_VERSION
    assert data["values"] == {"dual": "-inf", "gap": 0.333333333333, "primal": "inf", "z": 0.0}
    assert "timings" not in data
    assert list(data) == sorted(data)
    table = ReportsRepository(fmt="table").render(report)
    assert "values.primal" in table
    out = tmp_path / "nested" / "report.json"
    ReportsRepository(out).save(report)
    assert ReportsRepository().load(out) == data
    assert ReportsRepository().load(tmp_path / "absent.json") is None
