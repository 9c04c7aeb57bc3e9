"""Check results shared by the verification harnesses.

Every check serialises as ``{check, params, lhs, rhs, margin, pass}``; a
suite aggregates checks and renders a junit-style XML summary.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from xml.etree import ElementTree as ET


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (set, frozenset)):
        return sorted(v)
    if hasattr(v, "item"):
        return v.item()
    return v


@dataclass
class CheckResult:
    check: str
    params: dict
    lhs: object
    rhs: object
    margin: float
    passed: bool
    skipped: bool = False

    @classmethod
    def skip(cls, check: str, params: dict, reason: str) -> "CheckResult":
        """A check whose preconditions do not hold; it neither passes nor fails a suite."""
        return cls(check, dict(params, skipped=reason), None, None, 0.0, True, True)

    def as_dict(self) -> dict:
        d = {"check": self.check, "params": self.params, "lhs": self.lhs,
             "rhs": self.rhs, "margin": float(self.margin), "pass": bool(self.passed)}
        if self.skipped:
            d["skipped"] = True
        return _clean(d)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


@dataclass
class SuiteReport:
    name: str
    results: list[CheckResult] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[CheckResult]:
        return [r for r in self.results if not r.passed]

    def extend(self, results) -> None:
        self.results.extend(results)

    @property
    def skipped(self) -> list[CheckResult]:
        return [r for r in self.results if r.skipped]

    def summary(self) -> str:
        ran = len(self.results) - len(self.skipped)
        text = f"{self.name}: {ran - len(self.failures)}/{ran} checks passed"
        if self.skipped:
            text += f", {len(self.skipped)} skipped"
        return text

    def to_json(self) -> str:
        return json.dumps({"suite": self.name, "pass": self.passed,
                           "checks": [r.as_dict() for r in self.results]}, sort_keys=True)

    def to_junit(self) -> str:
        root = ET.Element("testsuites")
        suite = ET.SubElement(root, "testsuite", name=self.name, tests=str(len(self.results)),
                              failures=str(len(self.failures)), skipped=str(len(self.skipped)),
                              time=f"{self.seconds:.3f}")
        for i, r in enumerate(self.results):
            case = ET.SubElement(suite, "testcase", classname=self.name, name=f"{r.check}[{i}]")
            if r.skipped:
                ET.SubElement(case, "skipped", message=str(r.params.get("skipped", "")))
            elif not r.passed:
                f = ET.SubElement(case, "failure", message=f"margin {r.margin}")
                f.text = r.to_json()
        return ET.tostring(root, encoding="unicode")


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0
