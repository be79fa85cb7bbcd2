"""Success-rate and turn-count metrics over batches of episodes."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .engine import Episode


def success_rate_at(episodes: list[Episode], turn: int) -> float:
    """Fraction of episodes that succeeded by the given turn."""
    if not episodes:
        raise ValueError("empty episode set")
    hits = sum(1 for ep in episodes if ep.success and ep.turns_used <= turn)
    return hits / len(episodes)


def average_turn(episodes: list[Episode], t_max: int) -> float:
    """Mean turns to success; failures count as the full turn budget."""
    if not episodes:
        raise ValueError("empty episode set")
    total = sum(ep.turns_used if ep.success else t_max for ep in episodes)
    return total / len(episodes)


@dataclass
class MetricReport:
    sr_at: list[float]      # index k holds SR@(k+1)
    at: float
    n_episodes: int
    t_max: int
    fingerprint: str = ""

    @property
    def sr(self) -> float:
        return self.sr_at[-1]

    def validate(self) -> None:
        if any(b < a for a, b in zip(self.sr_at, self.sr_at[1:])):
            raise AssertionError("SR@T must be non-decreasing in T")
        if not all(0.0 <= v <= 1.0 for v in self.sr_at):
            raise AssertionError("SR@T out of [0,1]")
        if self.at > self.t_max:
            raise AssertionError("average turn exceeds the turn budget")

    def to_json(self) -> dict:
        return {"sr_at": self.sr_at, "at": self.at, "n_episodes": self.n_episodes,
                "t_max": self.t_max, "fingerprint": self.fingerprint}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def compute_report(episodes: list[Episode], t_max: int, fingerprint: str = "") -> MetricReport:
    report = MetricReport(
        sr_at=[success_rate_at(episodes, t) for t in range(1, t_max + 1)],
        at=average_turn(episodes, t_max),
        n_episodes=len(episodes),
        t_max=t_max,
        fingerprint=fingerprint,
    )
    report.validate()
    return report


def write_curve_csv(path: str | Path, report: MetricReport) -> None:
    lines = ["T,sr"]
    lines += [f"{t + 1},{sr}" for t, sr in enumerate(report.sr_at)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
