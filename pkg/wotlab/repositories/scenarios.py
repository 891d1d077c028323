from pathlib import Path
from typing import List, Union

from ..errors import UsageError
from .instances import InstancesRepository, LoadedInstance

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


class ScenariosRepository:
    """Bundled instances, one JSON file per application preset."""

    def __init__(self, root: Union[str, Path, None] = None) -> None:
        self.root = Path(root) if root is not None else SCENARIO_DIR
        self.instances = InstancesRepository(self.root)

    def names(self) -> List[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))

    def path(self, name: str) -> Path:
        path = self.root / (name if name.endswith(".json") else f"{name}.json")
        if not path.is_file():
            raise UsageError(f"unknown scenario {name!r}; bundled: {', '.join(self.names())}")
        return path

    def exists(self, name: str) -> bool:
        try:
            self.path(name)
        except UsageError:
            return False
        return True

    def load(self, name: str) -> LoadedInstance:
        return self.instances.instance(self.path(name))

    def describe(self) -> List[dict]:
        out = []
        for name in self.names():
            spec = self.load(name).spec
            out.append({"name": name, "cost": spec.cost.cost, "description": spec.description or ""})
        return out
