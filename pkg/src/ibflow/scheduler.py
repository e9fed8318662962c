"""Linear-decrement schedule for the memorization/prediction tradeoff weight."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import IBFlowError


@dataclass(frozen=True)
class AlphaSchedule:
    """alpha(t) = max(floor, alpha0 - t * delta).

    `per` selects whether t counts optimization steps ("step") or epochs
    ("epoch"); `alpha_at` itself is agnostic and callers pass the matching
    index.
    """

    alpha0: float = 1.0
    delta: float = 1e-3
    floor: float = 0.0
    per: str = "step"

    def __post_init__(self):
        if not 0.0 <= self.alpha0 <= 1.0:
            raise IBFlowError(f"alpha0 must lie in [0, 1], got {self.alpha0}")
        if self.delta < 0.0:
            raise IBFlowError(f"delta must be >= 0, got {self.delta}")
        if self.floor > self.alpha0:
            raise IBFlowError(f"floor {self.floor} exceeds alpha0 {self.alpha0}")
        if self.per not in ("step", "epoch"):
            raise IBFlowError(f"per must be 'step' or 'epoch', got {self.per!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def alpha_at(s: AlphaSchedule, t: int) -> float:
    if t < 0:
        raise IBFlowError(f"schedule index must be >= 0, got {t}")
    return max(s.floor, s.alpha0 - t * s.delta)
