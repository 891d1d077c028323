from .instances import InstancesRepository, LoadedInstance
from .scenarios import ScenariosRepository
from .reports import ReportsRepository

__all__ = [
    "InstancesRepository",
    "LoadedInstance",
    "ScenariosRepository",
    "ReportsRepository",
]
