"""Wall-clock to epoch-index mapping."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import BeforeGenesis


@dataclass(frozen=True)
class EpochClock:
    genesis: int
    lt_duration: int = 86400
    st_duration: int = 300

    def __post_init__(self):
        if self.st_duration <= 0 or self.lt_duration <= 0:
            raise ValueError("durations must be positive")
        if self.lt_duration % self.st_duration:
            raise ValueError("long-term duration must be a multiple of the short-term duration")

    @property
    def st_per_lt(self) -> int:
        return self.lt_duration // self.st_duration

    def epoch_at(self, now: float) -> tuple[int, int]:
        """Return ``(j, i)``: the long-term and short-term indices containing ``now``."""
        if now < self.genesis:
            raise BeforeGenesis(f"{now} precedes genesis {self.genesis}")
        elapsed = int(now - self.genesis)
        return elapsed // self.lt_duration, elapsed // self.st_duration

    def lt_bounds(self, j: int) -> tuple[int, int]:
        start = self.genesis + j * self.lt_duration
        return start, start + self.lt_duration

    def st_bounds(self, i: int) -> tuple[int, int]:
        start = self.genesis + i * self.st_duration
        return start, start + self.st_duration

    def lt_of_st(self, i: int) -> int:
        return i // self.st_per_lt
