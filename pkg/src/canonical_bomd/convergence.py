"""Log-log convergence fits and result tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r2: float


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> Optional[LogLogFit]:
    """Least-squares line through ``(log x, log y)``; ``None`` for fewer than two points."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    if x.size < 2:
        return None
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("log-log fit needs positive, finite data")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return LogLogFit(float(slope), float(intercept), r2)


@dataclass
class ConvergenceTable:
    """Rows ``(M, L1 error, Linf error)`` with fitted log-log slopes."""

    M: list = field(default_factory=list)
    l1: list = field(default_factory=list)
    linf: list = field(default_factory=list)

    def add(self, M: float, l1: float, linf: float) -> None:
        if self.M and M <= self.M[-1]:
            raise ValueError("mass ratios must be added in strictly increasing order")
        self.M.append(float(M))
        self.l1.append(float(l1))
        self.linf.append(float(linf))

    def fit(self, norm: str = "linf") -> Optional[LogLogFit]:
        return fit_loglog(self.M, getattr(self, norm))

    def summary(self) -> dict:
        out = {"M": self.M, "l1": self.l1, "linf": self.linf}
        for norm in ("l1", "linf"):
            f = self.fit(norm)
            if f is not None:
                out[f"slope_{norm}"] = f.slope
                out[f"r2_{norm}"] = f.r2
        return out
