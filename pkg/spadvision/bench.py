"""
Throughput measurements of the depth chain and of network inference.

Frames are preloaded, so only compute is timed.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import BenchmarkError
from .histproc import ComConfig, assemble_input
from .nn.unet import UNet, predict
from .pipeline import depth_pipeline

logger = logging.getLogger(__name__)

DEFAULT_WARMUP = 100
DEFAULT_FRAMES = 1000


@dataclass(frozen=True)
class BenchResult:
    """Timing of one workload. Latencies are per frame, in milliseconds."""
    name: str
    n_frames: int
    workers: int
    fps: float
    mean_ms: float
    p99_ms: float
    fps_std: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return {"frames": self.n_frames, "workers": self.workers, "fps": self.fps,
                "fps_std": self.fps_std, "mean_ms": self.mean_ms, "p99_ms": self.p99_ms}


def _cycle(frames: Sequence, n: int) -> List:
    return [frames[i % len(frames)] for i in range(n)]


def _check_frames(frames: Sequence, warmup: int) -> None:
    if not frames or len(frames) < warmup:
        raise BenchmarkError(f"{len(frames)} frames are too few for a {warmup}-frame warmup")


def measure_latency(func: Callable, frames: Sequence, n_frames: int = DEFAULT_FRAMES,
                    warmup: int = DEFAULT_WARMUP, name: str = "") -> BenchResult:
    """
    Time ``func`` frame by frame on one thread after ``warmup`` untimed calls.
    Frames are reused cyclically when fewer than ``warmup + n_frames`` exist.
    """
    _check_frames(frames, warmup)
    work = _cycle(frames, warmup + n_frames)
    for frame in work[:warmup]:
        func(frame)
    latencies = np.empty(n_frames)
    for i, frame in enumerate(work[warmup:]):
        started = time.perf_counter()
        func(frame)
        latencies[i] = time.perf_counter() - started
    total = float(latencies.sum())
    return BenchResult(name, n_frames, 1, n_frames / total if total > 0 else float("inf"),
                       1e3 * float(latencies.mean()), 1e3 * float(np.percentile(latencies, 99)))


def measure_throughput(run: Callable[[List], list], frames: Sequence, workers: int,
                       n_frames: int = DEFAULT_FRAMES, warmup: int = DEFAULT_WARMUP,
                       name: str = "") -> BenchResult:
    """Time one batched call of ``run`` over all frames (parallel workloads)."""
    _check_frames(frames, warmup)
    run(_cycle(frames, warmup))
    work = _cycle(frames, n_frames)
    started = time.perf_counter()
    run(work)
    total = time.perf_counter() - started
    per_frame = 1e3 * total / n_frames
    return BenchResult(name, n_frames, workers, n_frames / total if total > 0 else float("inf"),
                       per_frame, per_frame)


def _repeat(measure: Callable[[], BenchResult], repeats: int) -> BenchResult:
    results = [measure() for _ in range(max(repeats, 1))]
    fps = np.array([r.fps for r in results])
    best = results[int(np.argmax(fps))]
    return BenchResult(best.name, best.n_frames, best.workers, float(fps.mean()),
                       float(np.mean([r.mean_ms for r in results])),
                       float(np.max([r.p99_ms for r in results])),
                       float(fps.std(ddof=1)) if fps.size > 1 else 0.0)


def bench_depth_chain(hists: Sequence[np.ndarray], calib: Optional[np.ndarray] = None,
                      workers: int = 1, n_frames: int = DEFAULT_FRAMES, warmup: int = DEFAULT_WARMUP,
                      repeats: int = 1, cfg: ComConfig = ComConfig()) -> BenchResult:
    """Histogram frames to normalized depth inputs."""
    pipeline = depth_pipeline(calib, cfg, max_workers=workers)
    name = f"depth chain x{workers}"
    if workers == 1:
        result = _repeat(lambda: measure_latency(pipeline, hists, n_frames, warmup, name), repeats)
    else:
        result = _repeat(lambda: measure_throughput(pipeline.execute, hists, workers, n_frames, warmup, name),
                         repeats)
    logger.info("%s: %.1f frames/s (mean %.3f ms, p99 %.3f ms)", name, result.fps, result.mean_ms, result.p99_ms)
    return result


def bench_inference(model: UNet, kind: str, tensors: Sequence[Dict[str, np.ndarray]],
                    calib: Optional[np.ndarray] = None, n_frames: int = DEFAULT_FRAMES,
                    warmup: int = DEFAULT_WARMUP, repeats: int = 1) -> BenchResult:
    """Input assembly plus a single-frame forward pass, per frame."""
    def infer(frame):
        return predict(model, assemble_input(kind, hist=frame.get("hist"), spc=frame.get("spc"), calib=calib))

    name = f"inference {kind}"
    result = _repeat(lambda: measure_latency(infer, tensors, n_frames, warmup, name), repeats)
    logger.info("%s: %.1f frames/s (mean %.3f ms, p99 %.3f ms)", name, result.fps, result.mean_ms, result.p99_ms)
    return result


__all__ = [
    "DEFAULT_WARMUP",
    "DEFAULT_FRAMES",
    "BenchResult",
    "measure_latency",
    "measure_throughput",
    "bench_depth_chain",
    "bench_inference",
]
