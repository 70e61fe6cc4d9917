"""Runtime measurement of the pipeline stages, reported as a mean-ms table
with one row per branch plus percentile detail."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pipeline import DetectionPipeline, PipelineConfig

STAGES = ("pre", "mos", "cluster", "fusion", "gridnet")


@dataclass
class BenchResult:
    samples: dict  # stage -> np.ndarray of per-frame ms
    frames: int
    warmup_frames: int

    def mean(self, stage: str) -> float:
        return float(self.samples[stage].mean()) if len(self.samples[stage]) else 0.0

    def percentile(self, stage: str, q: float) -> float:
        return float(np.percentile(self.samples[stage], q)) if len(self.samples[stage]) else 0.0

    def ogm_total_mean(self) -> float:
        return sum(self.mean(s) for s in ("pre", "mos", "cluster", "fusion"))

    def gridnet_total_mean(self) -> float:
        return self.mean("gridnet") + self.mean("fusion")


def run_bench(frames, config: PipelineConfig, model=None, warmup_frames: int = 3) -> BenchResult:
    """Execute the pipeline over the frames and collect per-stage wall times.
    The first warmup_frames are excluded so one-time compilation and cache
    effects do not skew the means."""
    pipeline = DetectionPipeline(config, model=model)
    rows = {s: [] for s in STAGES}
    count = 0
    for frame in frames:
        result = pipeline.step(frame)
        count += 1
        if count <= warmup_frames:
            continue
        for s in STAGES:
            rows[s].append(result.timings_ms.get(s, 0.0))
    pipeline.close()
    if count <= warmup_frames:
        raise ValueError(f"need more than {warmup_frames} frames to benchmark")
    return BenchResult(
        samples={s: np.asarray(v) for s, v in rows.items()}, frames=count, warmup_frames=warmup_frames
    )


def render_bench_table(result: BenchResult, gridnet_enabled: bool) -> str:
    """Mean per-stage processing time (ms), parallel-pipeline layout:
    columns Pre-process | MOS | Clustering | Fusion | Total."""

    def fmt(v) -> str:
        return ("-" if v is None else f"{v:.2f}").rjust(12)

    lines = []
    lines.append(f"mean processing time (ms) over {result.frames - result.warmup_frames} frames")
    header = "".join(h.rjust(12) for h in ("", "Pre-process", "MOS", "Clustering", "Fusion", "Total"))
    lines.append(header)
    ogm = [result.mean("pre"), result.mean("mos"), result.mean("cluster"), result.mean("fusion")]
    lines.append("OGM".rjust(12) + "".join(fmt(v) for v in ogm) + fmt(sum(ogm)))
    if gridnet_enabled:
        g = [None, result.mean("gridnet"), None, result.mean("fusion")]
        total = result.gridnet_total_mean()
        lines.append("GridNet".rjust(12) + "".join(fmt(v) for v in g) + fmt(total))
    lines.append("")
    lines.append("percentiles (ms):")
    for stage, label in (("pre", "pre-process"), ("mos", "MOS"), ("cluster", "clustering"), ("fusion", "fusion"), ("gridnet", "gridnet")):
        if stage == "gridnet" and not gridnet_enabled:
            continue
        lines.append(
            f"  {label:<12} p50={result.percentile(stage, 50):8.2f}  p95={result.percentile(stage, 95):8.2f}"
        )
    return "\n".join(lines) + "\n"
