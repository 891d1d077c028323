from pydantic import BaseModel
from pydantic import Field
from pydantic import ValidationError
from pydantic import field_validator
import os
from dotenv import load_dotenv


load_dotenv()

LP_METHODS = ("highs", "highs-ds", "highs-ipm")
GAUSS_NODE_CHOICES = (8, 16, 32)


class Config(BaseModel):
    feas_tol: float = Field(default_factory=lambda: float(os.getenv("WOTLAB_FEAS_TOL", "1e-8")))
    gap_tol: float = Field(default_factory=lambda: float(os.getenv("WOTLAB_GAP_TOL", "1e-6")))
    margin_tol: float = Field(default_factory=lambda: float(os.getenv("WOTLAB_MARGIN_TOL", "1e-9")))
    indicator_tol: float = Field(default_factory=lambda: float(os.getenv("WOTLAB_INDICATOR_TOL", "1e-9")))
    slope_bound: float = Field(default_factory=lambda: float(os.getenv("WOTLAB_SLOPE_BOUND", "1e3")))

    lp_method: str = Field(default_factory=lambda: os.getenv("WOTLAB_LP_METHOD", "highs-ds"))
    fw_max_iter: int = Field(default_factory=lambda: int(os.getenv("WOTLAB_FW_MAX_ITER", "500")))
    cut_max_iter: int = Field(default_factory=lambda: int(os.getenv("WOTLAB_CUT_MAX_ITER", "300")))

    gauss_nodes: int = Field(default_factory=lambda: int(os.getenv("WOTLAB_GAUSS_NODES", "16")))
    grid_refine: int = Field(default_factory=lambda: int(os.getenv("WOTLAB_GRID_REFINE", "0")))
    seed: int = Field(default_factory=lambda: int(os.getenv("WOTLAB_SEED", "7")))
    threads: int = Field(default_factory=lambda: int(os.getenv("WOTLAB_THREADS", "1")))

    log_level: str = Field(default_factory=lambda: os.getenv("WOTLAB_LOG_LEVEL", "WARNING"))
    log_file: str = Field(default_factory=lambda: os.getenv("WOTLAB_LOG_FILE", "wotlab.log"))

    @field_validator("lp_method")
    @classmethod
    def validate_lp_method(cls, v: str) -> str:
        v = (v or "highs-ds").lower()
        if v not in LP_METHODS:
            return "highs-ds"
        return v

    @field_validator("gauss_nodes")
    @classmethod
    def validate_gauss_nodes(cls, v: int) -> int:
        if v not in GAUSS_NODE_CHOICES:
            return 16
        return v

    @field_validator("threads")
    @classmethod
    def validate_threads(cls, v: int) -> int:
        return max(1, v)

    @field_validator("grid_refine")
    @classmethod
    def validate_grid_refine(cls, v: int) -> int:
        if v < 0:
            raise ValueError("grid_refine must be non-negative")
        return v


class SolverOptions(BaseModel):
    """Per-call knobs; defaults come from the environment config."""

    feas_tol: float = 1e-8
    tol: float = 1e-6
    margin_tol: float = 1e-9
    indicator_tol: float = 1e-9
    slope_bound: float = 1e3
    lp_method: str = "highs-ds"
    max_iter: int = 500
    cut_max_iter: int = 300
    grid_refine: int = 0
    seed: int = 7

    @classmethod
    def from_config(cls, cfg: Config | None = None, **overrides) -> "SolverOptions":
        cfg = cfg or get_config()
        base = {
            "feas_tol": cfg.feas_tol,
            "tol": cfg.gap_tol,
            "margin_tol": cfg.margin_tol,
            "indicator_tol": cfg.indicator_tol,
            "slope_bound": cfg.slope_bound,
            "lp_method": cfg.lp_method,
            "max_iter": cfg.fw_max_iter,
            "cut_max_iter": cfg.cut_max_iter,
            "grid_refine": cfg.grid_refine,
            "seed": cfg.seed,
        }
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


def get_config() -> Config:
    try:
        return Config()
    except ValidationError as exc:
        raise RuntimeError(f"Invalid configuration: {exc}")


def default_options(**overrides) -> SolverOptions:
    return SolverOptions.from_config(get_config(), **overrides)
