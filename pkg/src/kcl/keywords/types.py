from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping


class KeywordError(Exception):
    pass


@dataclass(frozen=True)
class KeywordList:
    """Words of one domain with non-negative weights, strictly ordered.

    Order is weight descending, then word ascending for equal weights.
    """

    domain: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        words = [w for w, _ in self.entries]
        if len(set(words)) != len(words):
            raise KeywordError(f"duplicate words in keyword list for {self.domain!r}")
        for (w0, s0), (w1, s1) in zip(self.entries, self.entries[1:]):
            if (-s0, w0) >= (-s1, w1):
                raise KeywordError(f"keyword list for {self.domain!r} not sorted at {w0!r}/{w1!r}")
        if any(not s >= 0 for _, s in self.entries):
            raise KeywordError(f"negative or NaN weight in keyword list for {self.domain!r}")

    @classmethod
    def from_scores(cls, domain: str, scores: Mapping[str, float]) -> KeywordList:
        ordered = sorted(((w, float(s)) for w, s in scores.items()), key=lambda e: (-e[1], e[0]))
        return cls(domain, tuple(ordered))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.entries]

    @property
    def weights(self) -> list[float]:
        return [s for _, s in self.entries]
