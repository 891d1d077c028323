import json
import sys
from pathlib import Path
from typing import Literal, Optional, Union

from ..models import Report
from ..utils import format_table, to_jsonable

Format = Literal["json", "table"]


class ReportsRepository:
    """Deterministic report output: sorted keys, 12 significant digits."""

    def __init__(self, out: Union[str, Path, None] = None, fmt: Format = "json") -> None:
        self.out = Path(out) if out else None
        self.fmt = fmt

    def render(self, report: Union[Report, dict]) -> str:
        data = to_jsonable(report.to_dict() if isinstance(report, Report) else report)
        if self.fmt == "table":
            return format_table(data)
        return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def save(self, report: Union[Report, dict]) -> str:
        text = self.render(report)
        if self.out is None:
            sys.stdout.write(text)
            sys.stdout.flush()
        else:
            self.out.parent.mkdir(parents=True, exist_ok=True)
            self.out.write_text(text, encoding="utf-8")
        return text

    def load(self, path: Union[str, Path]) -> Optional[dict]:
        path = Path(path)
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))
