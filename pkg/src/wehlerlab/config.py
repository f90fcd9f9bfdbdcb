"""Numerical tolerances shared by every module.

All thresholds apply to normalized data: coefficient tensors scaled so the
largest entry is 1, and projective coordinates scaled so the dominant
component is 1.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Tolerances:
    on_surface_tol: float = 1e-8
    tangency_tol: float = 1e-8
    singular_tol: float = 1e-6
    resultant_tol: float = 1e-8
    trace_tol: float = 1e-9
    fixpt_tol: float = 1e-7
    cluster_tol: float = 1e-6
    fiber_margin: float = 1e-3
    orbit_dedup: float = 1e-7
    orbit_polish: float = 1e-10
    verdict_atol: float = 1e-12

    def replace(self, **overrides) -> "Tolerances":
        known = {f.name for f in dataclasses.fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown tolerance keys: {sorted(unknown)}")
        return dataclasses.replace(self, **{k: float(v) for k, v in overrides.items()})

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


DEFAULT = Tolerances()

_current = [DEFAULT]


def tolerances() -> Tolerances:
    """The active tolerance set (module-wide default unless overridden)."""
    return _current[0]


def set_tolerances(tol: Tolerances) -> None:
    _current[0] = tol


@dataclass
class override:
    """Context manager that temporarily swaps the active tolerances."""

    values: dict = field(default_factory=dict)

    def __enter__(self):
        self._saved = _current[0]
        _current[0] = self._saved.replace(**self.values)
        return _current[0]

    def __exit__(self, *exc):
        _current[0] = self._saved
        return False
