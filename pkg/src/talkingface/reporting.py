"""Loss reports and training-history CSV persistence."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class LossReport:
    """Named scalar losses plus their weighted total for one step."""

    total: float
    components: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.components[name]


def write_history_csv(history: list[LossReport], path) -> None:
    path = Path(path)
    keys = sorted({k for report in history for k in report.components})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "total", *keys])
        for i, report in enumerate(history):
            writer.writerow([i, report.total, *[report.components.get(k, "") for k in keys]])
