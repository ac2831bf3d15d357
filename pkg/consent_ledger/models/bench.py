"""Benchmark workload, report and sweep models."""

import csv
import io
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from consent_ledger.core.config import NetworkConfig
from consent_ledger.models.network import TxKind

SWEEP_COLUMNS = (
    "axis_value", "kind", "offered_load", "throughput", "success_rate", "latency_mean", "latency_p95",
)


class WorkloadSpec(BaseModel):
    """Open-loop workload: ``offered_load`` tx/s for ``duration_s`` seconds."""

    kind: TxKind = TxKind.READ
    offered_load: float = Field(..., description="Proposals per second")
    duration_s: float = Field(default=4.0)
    client_count: Optional[int] = Field(None, description="In-flight cap; the network's client_count when unset")
    network: NetworkConfig = Field(default_factory=lambda: NetworkConfig(sign_endorsements=False))
    seed: Optional[int] = Field(None, description="Overrides network.seed when set")
    dataset_count: int = Field(default=512, ge=1, description="Datasets registered during warm-up")

    model_config = {"frozen": True}

    @property
    def effective_seed(self) -> int:
        return self.network.seed if self.seed is None else self.seed

    @property
    def clients(self) -> int:
        return self.network.client_count if self.client_count is None else self.client_count


class LatencySummary(BaseModel):
    """Commit latency in seconds."""

    mean: float = 0.0
    p50: float = 0.0
    p95: float = 0.0


class BenchReport(BaseModel):
    """Success rate, throughput, latency and queue occupancy of one run."""

    kind: TxKind
    offered_load: float
    peer_count: int
    submitted: int
    committed: int
    rejected: int
    timed_out: int
    success_rate: float = Field(..., ge=0.0, le=1.0)
    throughput: float = Field(..., ge=0.0)
    latency: LatencySummary
    queue_occupancy: Dict[str, float] = Field(default_factory=dict)

    @property
    def mean_queue_occupancy(self) -> float:
        if not self.queue_occupancy:
            return 0.0
        return sum(self.queue_occupancy.values()) / len(self.queue_occupancy)


class SweepPoint(BaseModel):
    axis_value: float
    report: BenchReport


class SweepResult(BaseModel):
    """One report per axis value, in axis order."""

    axis: Literal["offered_load", "peer_count"]
    points: List[SweepPoint] = Field(default_factory=list)

    @property
    def reports(self) -> List[BenchReport]:
        return [point.report for point in self.points]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for point in self.points:
            report = point.report
            writer.writerow([
                f"{point.axis_value:g}",
                report.kind.value,
                f"{report.offered_load:g}",
                f"{report.throughput:.3f}",
                f"{report.success_rate:.4f}",
                f"{report.latency.mean:.6f}",
                f"{report.latency.p95:.6f}",
            ])
        return buffer.getvalue()

    def to_plot_data(self) -> Dict[str, object]:
        """One series per metric, keyed by metric name, over the axis values."""
        return {
            "axis": self.axis,
            "x": [point.axis_value for point in self.points],
            "series": {
                "throughput": [r.throughput for r in self.reports],
                "success_rate": [r.success_rate for r in self.reports],
                "latency_mean": [r.latency.mean for r in self.reports],
                "latency_p95": [r.latency.p95 for r in self.reports],
                "queue_occupancy": [r.mean_queue_occupancy for r in self.reports],
            },
        }
