"""Thread-safe counters rendered in the Prometheus exposition format."""

from __future__ import annotations

import threading
from collections import defaultdict


class MetricsRegistry:
    """Monotone counters plus per-stage latency accumulators."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.requests_total = 0
        self.traces_scored_total = 0
        self.degenerate_total = 0
        self.item_errors_total = 0
        self._stage_time: dict[str, float] = defaultdict(float)
        self._stage_count: dict[str, int] = defaultdict(int)

    def observe_request(self) -> None:
        with self._lock:
            self.requests_total += 1

    def observe_results(self, results: list) -> None:
        from ..pipeline import ScoreResult

        with self._lock:
            for item in results:
                if isinstance(item, ScoreResult):
                    self.traces_scored_total += 1
                    if item.score.degenerate:
                        self.degenerate_total += 1
                    for stage, seconds in item.timing.items():
                        self._stage_time[stage] += seconds
                        self._stage_count[stage] += 1
                else:
                    self.item_errors_total += 1

    def render(self) -> str:
        with self._lock:
            lines = []
            for name, value in (
                ("sarl_requests_total", self.requests_total),
                ("sarl_traces_scored_total", self.traces_scored_total),
                ("sarl_degenerate_total", self.degenerate_total),
                ("sarl_item_errors_total", self.item_errors_total),
            ):
                lines.append(f"# TYPE {name} counter")
                lines.append(f"{name} {value}")
            lines.append("# TYPE sarl_stage_latency_seconds_mean gauge")
            for stage in sorted(self._stage_time):
                count = self._stage_count[stage]
                mean = self._stage_time[stage] / count if count else 0.0
                lines.append(
                    f'sarl_stage_latency_seconds_mean{{stage="{stage}"}} {mean}'
                )
            return "\n".join(lines) + "\n"
