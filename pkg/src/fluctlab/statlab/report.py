"""Verdicts and tabular campaign results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Verdict:
    """One pass/fail claim: ``value`` checked against ``band`` = (lo, hi)."""

    criterion: str
    value: float
    band: tuple[float, float]
    passed: bool
    detail: dict = field(default_factory=dict)

    @classmethod
    def in_band(cls, criterion: str, value: float, lo: float, hi: float, **detail) -> Verdict:
        ok = bool(math.isfinite(value) and lo <= value <= hi)
        return cls(criterion, float(value), (float(lo), float(hi)), ok, dict(detail))

    def to_json(self) -> dict:
        return {"criterion": self.criterion, "value": _num(self.value),
                "band": [_num(b) for b in self.band], "pass": self.passed}

    def line(self) -> str:
        lo, hi = self.band
        return (f"{'PASS' if self.passed else 'FAIL'} {self.criterion}: "
                f"value={self.value:.6g} band=[{lo:.6g}, {hi:.6g}]")


def _num(x: float):
    # JSON has no inf/nan; encode them as strings
    x = float(x)
    return x if math.isfinite(x) else str(x)


@dataclass
class Table:
    """Named CSV table: a header and rows of plain Python scalars."""

    name: str
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def extend(self, rows) -> None:
        self.rows.extend(tuple(r) for r in rows)


@dataclass
class CampaignResult:
    """Everything a campaign hands to the CLI for persistence."""

    name: str
    tables: list[Table]
    verdicts: list[Verdict]
    summary: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)
