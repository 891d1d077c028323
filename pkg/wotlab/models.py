from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Any, Dict, List, Literal, Optional, Union

from .services.costs import CostPlugin, build_cost
from .services.hulls import GridFunction, MaxAffinePotential
from .services.measures import Coupling, DiscreteMeasure
from .services.orders import ConeSpec, Generator

SCHEMA_VERSION = "wotlab/1"

COST_NAMES = (
    "barycentric",
    "martingale",
    "cxo_indicator",
    "submartingale",
    "icx_pos",
    "monopolist",
    "neg_mcov",
    "relaxed_mbb",
    "classical",
    "hull",
)


def _point_rows(v: Any) -> Any:
    # 1D shorthand: [0, 1] or 0 stand for [[0], [1]] and [[0]]
    if isinstance(v, (int, float)):
        return [[v]]
    if isinstance(v, list) and v and all(isinstance(c, (int, float)) for c in v):
        return [[c] for c in v]
    return v


class MeasureModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dim: Optional[int] = None
    p: float = 2.0
    points: List[List[float]]
    weights: Optional[List[float]] = None

    @field_validator("points", mode="before")
    @classmethod
    def validate_points(cls, v: Any) -> Any:
        return _point_rows(v)

    @model_validator(mode="after")
    def check_shape(self) -> "MeasureModel":
        dims = {len(row) for row in self.points}
        if len(dims) > 1:
            raise ValueError("points have mixed dimensions")
        if self.dim is not None and dims and dims != {self.dim}:
            raise ValueError(f"points are not {self.dim}-dimensional")
        if self.weights is not None and len(self.weights) != len(self.points):
            raise ValueError(f"{len(self.points)} points but {len(self.weights)} weights")
        return self

    def to_measure(self) -> DiscreteMeasure:
        return DiscreteMeasure.create(self.points, self.weights, p=self.p)

    @classmethod
    def from_measure(cls, measure: DiscreteMeasure) -> "MeasureModel":
        return cls(**measure.to_dict())


class CouplingModel(BaseModel):
    mu: MeasureModel
    nu: MeasureModel
    matrix: List[List[float]]

    def to_coupling(self) -> Coupling:
        return Coupling.between(self.mu.to_measure(), self.nu.to_measure(), self.matrix)


class GridFunctionModel(BaseModel):
    support: List[List[float]]
    values: List[Union[float, Literal["inf"]]]

    @field_validator("support", mode="before")
    @classmethod
    def validate_support(cls, v: Any) -> Any:
        return _point_rows(v)

    def to_grid_function(self) -> GridFunction:
        return GridFunction(self.support, [float(v) for v in self.values])


class PieceModel(BaseModel):
    slope: List[float]
    intercept: float

    @field_validator("slope", mode="before")
    @classmethod
    def validate_slope(cls, v: Any) -> Any:
        return [v] if isinstance(v, (int, float)) else v


class PotentialModel(BaseModel):
    pieces: List[PieceModel] = Field(min_length=1)
    monotone: bool = False

    def to_potential(self) -> MaxAffinePotential:
        return MaxAffinePotential(
            [piece.slope for piece in self.pieces],
            [piece.intercept for piece in self.pieces],
            monotone=self.monotone,
        )


class GeneratorModel(BaseModel):
    kind: Literal["affine", "hinge", "table"]
    slope: Optional[List[float]] = None
    intercept: float = 0.0
    knot: Optional[float] = None
    axis: int = 0
    support: Optional[List[List[float]]] = None
    values: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_kind_fields(self) -> "GeneratorModel":
        if self.kind == "affine" and self.slope is None:
            raise ValueError("affine generators need a slope")
        if self.kind == "hinge" and self.knot is None:
            raise ValueError("hinge generators need a knot")
        if self.kind == "table" and (self.support is None or self.values is None):
            raise ValueError("table generators need support and values")
        return self

    def to_generator(self) -> Generator:
        return Generator.from_dict(self.model_dump(exclude_none=True))


class ConeSpecModel(BaseModel):
    family: Literal["convex", "icx", "convex1d", "icx1d", "custom"] = "custom"
    generators: List[GeneratorModel] = []
    knots: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_generators(self) -> "ConeSpecModel":
        if self.family == "custom" and not self.generators:
            raise ValueError("custom cones need at least one generator")
        return self

    def to_cone(self) -> ConeSpec:
        return ConeSpec(
            self.family,
            generators=tuple(g.to_generator() for g in self.generators),
            knots=None if self.knots is None else tuple(self.knots),
        )


class CostConfigModel(BaseModel):
    cost: Literal[COST_NAMES]
    params: Dict[str, Any] = {}

    def to_cost(self) -> CostPlugin:
        return build_cost(self)


class OptionsModel(BaseModel):
    """Solver option overrides carried by an instance file."""

    model_config = ConfigDict(extra="forbid")

    feas_tol: Optional[float] = None
    tol: Optional[float] = None
    margin_tol: Optional[float] = None
    indicator_tol: Optional[float] = None
    slope_bound: Optional[float] = None
    lp_method: Optional[Literal["highs", "highs-ds", "highs-ipm"]] = None
    max_iter: Optional[int] = None
    cut_max_iter: Optional[int] = None
    grid_refine: Optional[int] = Field(default=None, ge=0)
    seed: Optional[int] = None


class InstanceSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    name: Optional[str] = None
    description: Optional[str] = None
    mu: Union[str, MeasureModel]
    nu: Union[str, MeasureModel]
    cost: CostConfigModel
    # "convex", "icx", a cone file path or an inline cone
    dual_class: Union[str, ConeSpecModel] = Field(default="convex", alias="class")
    cone: Union[str, ConeSpecModel] = "cx"
    side: Literal["primal", "dual", "both"] = "both"
    opts: OptionsModel = OptionsModel()
    expected: Dict[str, Any] = {}

    @field_validator("schema_version")
    @classmethod
    def validate_schema(cls, v: str) -> str:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema {v!r}, expected {SCHEMA_VERSION}")
        return v


class Report(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    command: str
    ok: bool
    instance: Optional[str] = None
    values: Dict[str, Any] = {}
    certificates: Dict[str, Any] = {}
    witnesses: Dict[str, Any] = {}
    details: Dict[str, Any] = {}
    config: Dict[str, Any] = {}
    timings: Optional[Dict[str, float]] = None

    def to_dict(self) -> dict:
        return self.model_dump(by_alias=True, exclude_none=True)
