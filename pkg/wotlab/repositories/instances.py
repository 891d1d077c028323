import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

from ..errors import UsageError
from ..models import (
    ConeSpecModel,
    CostConfigModel,
    CouplingModel,
    GridFunctionModel,
    InstanceSpec,
    MeasureModel,
    PotentialModel,
)
from ..services.costs import CostPlugin
from ..services.hulls import GridFunction, MaxAffinePotential
from ..services.measures import Coupling, DiscreteMeasure
from ..services.orders import ConeSpec

Ref = Union[str, Path, Dict[str, Any], Any]

CLASS_PRESETS = {"convex": ConeSpec.convex, "icx": ConeSpec.icx}
CONE_PRESETS = {"cx": ConeSpec.convex, "convex": ConeSpec.convex, "icx": ConeSpec.icx}


@dataclass
class LoadedInstance:
    spec: InstanceSpec
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    cost: CostPlugin
    dual_class: Union[str, ConeSpec]
    cone: ConeSpec
    source: Optional[str] = None

    @property
    def name(self) -> str:
        return self.spec.name or (Path(self.source).stem if self.source else "inline")

    def option_overrides(self) -> dict:
        return self.spec.opts.model_dump(exclude_none=True)


class InstancesRepository:
    """Reads instance files and the measures, cones and costs they reference.

    References are inline JSON (a dict, or a string starting with "{") or file
    paths resolved against `root`.
    """

    def __init__(self, root: Union[str, Path, None] = None) -> None:
        self.root = Path(root) if root is not None else Path(".")

    def path(self, name: Union[str, Path]) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.root / p

    def read_json(self, name: Union[str, Path]) -> Any:
        path = self.path(name)
        if not path.is_file():
            raise UsageError(f"{path} does not exist")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path} is not valid JSON: {exc}")

    def resolve(self, ref: Ref) -> Any:
        if hasattr(ref, "model_dump"):
            return ref.model_dump(exclude_none=True)
        if isinstance(ref, Path):
            return self.read_json(ref)
        if isinstance(ref, str):
            text = ref.strip()
            if text.startswith("{"):
                try:
                    return json.loads(text)
                except json.JSONDecodeError as exc:
                    raise UsageError(f"inline JSON is malformed: {exc}")
            return self.read_json(text)
        return ref

    def measure(self, ref: Ref) -> DiscreteMeasure:
        return MeasureModel.model_validate(self.resolve(ref)).to_measure()

    def coupling(self, ref: Ref) -> Coupling:
        return CouplingModel.model_validate(self.resolve(ref)).to_coupling()

    def grid_function(self, ref: Ref) -> GridFunction:
        return GridFunctionModel.model_validate(self.resolve(ref)).to_grid_function()

    def potential(self, ref: Ref) -> MaxAffinePotential:
        return PotentialModel.model_validate(self.resolve(ref)).to_potential()

    def cone(self, ref: Ref) -> ConeSpec:
        if isinstance(ref, str) and ref in CONE_PRESETS:
            return CONE_PRESETS[ref]()
        return ConeSpecModel.model_validate(self.resolve(ref)).to_cone()

    def cost(self, ref: Ref) -> CostPlugin:
        return CostConfigModel.model_validate(self.resolve(ref)).to_cost()

    def dual_class(self, ref: Ref) -> Union[str, ConeSpec]:
        if isinstance(ref, str) and ref in CLASS_PRESETS:
            return ref
        return self.cone(ref)

    def instance(self, name: Union[str, Path]) -> LoadedInstance:
        path = self.path(name)
        spec = InstanceSpec.model_validate(self.read_json(path))
        # measure and cone paths inside an instance are relative to the instance file
        return InstancesRepository(path.parent).from_spec(spec, str(path))

    def from_spec(self, spec: InstanceSpec, source: Optional[str] = None) -> LoadedInstance:
        mu = self.measure(spec.mu)
        nu = self.measure(spec.nu)
        if mu.dim != nu.dim:
            raise UsageError(f"mu is {mu.dim}-dimensional but nu is {nu.dim}-dimensional")
        return LoadedInstance(
            spec=spec,
            mu=mu,
            nu=nu,
            cost=spec.cost.to_cost(),
            dual_class=self.dual_class(spec.dual_class),
            cone=self.cone(spec.cone),
            source=source,
        )
