from dataclasses import dataclass, field
from typing import List, NamedTuple
import numpy as np


class ExpertSolution(NamedTuple):
    """Expert cost weights with their GARE solution and gain"""
    Q: np.ndarray
    R: np.ndarray
    gamma: float
    P: np.ndarray
    K: np.ndarray


class LearnedSolution(NamedTuple):
    """Learner cost weights and value matrix produced by an IRL run"""
    Q: np.ndarray
    R: np.ndarray
    gamma: float
    P: np.ndarray


@dataclass(frozen=True)
class CheckResult:
    """
    Outcome of one verification check.

    Attributes:
        name: Check identifier (e.g. "consistency_residual")
        residual: Measured value compared against the tolerance
        tolerance: Explicit pass threshold
        passed: Outcome
        anchor: Result of the theory the check instantiates
        detail: Free-form context (margins, counts)
    """
    name: str
    residual: float
    tolerance: float
    passed: bool
    anchor: str = ""
    detail: str = ""


@dataclass()
class VerificationReport:
    """Named checks, each carrying its own tolerance"""
    checks: List[CheckResult] = field(default_factory=list)

    def add(self, name: str, residual: float, tolerance: float, anchor: str = "",
            detail: str = "", passed: bool = None) -> CheckResult:
        """Adds a check; unless given, it passes when residual <= tolerance"""
        residual = float(residual)
        if passed is None:
            passed = bool(np.isfinite(residual) and residual <= tolerance)
        check = CheckResult(name=name, residual=residual, tolerance=float(tolerance),
                            passed=bool(passed), anchor=anchor, detail=detail)
        self.checks.append(check)
        return check

    def extend(self, other: "VerificationReport") -> "VerificationReport":
        self.checks.extend(other.checks)
        return self

    def get(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_text(self) -> str:
        """Human-readable table of all checks"""
        header = f"{'check':<28} {'residual':>14} {'tolerance':>11}  {'result':<6} anchor"
        lines = [header, "-" * len(header)]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{c.name:<28} {c.residual:>14.6e} {c.tolerance:>11.1e}  {status:<6} {c.anchor}")
            if c.detail:
                lines.append(f"{'':<28} {c.detail}")
        lines.append("")
        lines.append(f"{sum(c.passed for c in self.checks)}/{len(self.checks)} checks passed")
        return "\n".join(lines)
