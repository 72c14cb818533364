"""
证书检查报告
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np


@dataclass
class CheckResult:
    """单项检查，worst_margin ≤ tolerance 时通过"""
    name: str
    worst_margin: float
    tolerance: float
    witness: Optional[List[float]] = None

    @property
    def passed(self) -> bool:
        return not np.isnan(self.worst_margin) and self.worst_margin <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "witness": self.witness,
        }


@dataclass
class CertificateReport:
    """一组检查结果"""
    subject: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def add(self, name: str, worst_margin: float, tolerance: float,
            witness: Optional[np.ndarray] = None) -> CheckResult:
        check = CheckResult(
            name=name,
            worst_margin=float(worst_margin),
            tolerance=float(tolerance),
            witness=None if witness is None else [float(v) for v in np.ravel(witness)],
        )
        self.checks.append(check)
        return check

    def failed(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def get(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subject": self.subject,
            "passed": self.passed,
            "checks": [check.to_dict() for check in self.checks],
        }
