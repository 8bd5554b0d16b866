"""Value-with-threshold records used by every report."""

from __future__ import annotations

import operator
from dataclasses import dataclass, field

_OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt, "==": operator.eq}


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    op: str = "<="
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        v = self.value
        if v is None or (isinstance(v, float) and v != v):
            return False
        return bool(_OPS[self.op](v, self.threshold))

    def as_dict(self):
        d = {"name": self.name, "value": self.value, "threshold": self.threshold, "op": self.op,
             "passed": self.passed}
        if self.detail:
            d["detail"] = self.detail
        return d

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name}: {self.value:.3e} {self.op} {self.threshold:.3e}"
