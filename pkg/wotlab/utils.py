import math
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Tuple

import numpy as np

SIG_DIGITS = 12


def round_sig(value: float, digits: int = SIG_DIGITS) -> float:
    if not math.isfinite(value):
        return value
    out = float(f"{value:.{digits}g}")
    # no negative zeros in reports
    return 0.0 if out == 0.0 else out


def to_jsonable(obj: Any, digits: int = SIG_DIGITS) -> Any:
    """Plain JSON types with floats at `digits` significant digits and inf sentinels."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return round_sig(value, digits)
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict(), digits)
    return obj


def flatten(data: Any, prefix: str = "") -> List[Tuple[str, Any]]:
    """Dotted-key rows for the table format; lists of scalars stay on one row."""
    rows: List[Tuple[str, Any]] = []
    if isinstance(data, dict):
        for key in sorted(data):
            rows.extend(flatten(data[key], f"{prefix}.{key}" if prefix else str(key)))
    elif isinstance(data, list) and any(isinstance(v, (dict, list)) for v in data):
        for i, v in enumerate(data):
            rows.extend(flatten(v, f"{prefix}[{i}]"))
    else:
        rows.append((prefix, data))
    return rows


def format_table(data: Dict[str, Any]) -> str:
    rows = flatten(data)
    width = max((len(k) for k, _ in rows), default=0)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows) + "\n"


@contextmanager
def timed(timings: Dict[str, float], key: str) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[key] = time.perf_counter() - start
