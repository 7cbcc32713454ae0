"""Inference-latency and accuracy harness for the two downsampling variants.

Timing covers the single-image forward pass only (no data loading, no
checkpoint I/O), on one thread, monotonic clock. The harness emits a summary
CSV plus a raw per-repetition CSV so every statistic can be recomputed.
"""

import dataclasses
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as _scipy_stats

from . import kernels, model, train
from .data import DatasetManifest, load_sample
from .errors import ConfigError

try:
    from threadpoolctl import threadpool_limits as _threadpool_limits
except ImportError:  # pragma: no cover
    _threadpool_limits = None


@dataclass
class LatencyStats:
    mean_ms: float
    median_ms: float
    p95_ms: float
    std_ms: float
    min_ms: float
    max_ms: float
    repetitions: int
    warmup: int
    raw_ms: list = field(default_factory=list)


@dataclass
class BenchRow:
    category: str
    variant: str
    stats: LatencyStats
    mean_chamfer: float
    checkpoint_bytes: int


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    element_width: int = 4
    thread_note: str = ""
    backend: str = ""

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            f.write("category,variant,mean_ms,median_ms,p95_ms,std_ms,"
                    "mean_chamfer,checkpoint_bytes\n")
            for r in self.rows:
                s = r.stats
                f.write(f"{r.category},{r.variant},{s.mean_ms:.6f},"
                        f"{s.median_ms:.6f},{s.p95_ms:.6f},{s.std_ms:.6f},"
                        f"{r.mean_chamfer:.10g},{r.checkpoint_bytes}\n")

    def raw_to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            f.write("category,variant,rep,ms\n")
            for r in self.rows:
                for i, ms in enumerate(r.stats.raw_ms):
                    f.write(f"{r.category},{r.variant},{i},{ms:.6f}\n")


def _single_thread():
    if _threadpool_limits is not None:
        return _threadpool_limits(limits=1)
    import contextlib
    return contextlib.nullcontext()


def _stats_from_raw(raw, reps, warmup) -> LatencyStats:
    arr = np.asarray(raw)
    return LatencyStats(
        mean_ms=float(arr.mean()),
        median_ms=float(np.median(arr)),
        p95_ms=float(np.percentile(arr, 95)),
        std_ms=float(arr.std(ddof=0)),
        min_ms=float(arr.min()),
        max_ms=float(arr.max()),
        repetitions=reps,
        warmup=warmup,
        raw_ms=list(raw),
    )


def time_inference(params, config, images, warmup: int = 5,
                   reps: int = 30) -> LatencyStats:
    """Wall-clock stats for single-image forward passes.

    Cycles through the given images; warmup passes are run and discarded
    (they also absorb one-time JIT compilation).
    """
    stats = time_inference_many({"only": (params, config)}, images,
                                warmup=warmup, reps=reps)
    return stats["only"]


def time_inference_many(models: dict, images, warmup: int = 5,
                        reps: int = 30) -> dict:
    """Time several models with rep-level interleaving.

    Each repetition runs every model once, in turn, on the same image, so
    slow drift in machine load lands on every distribution equally. Returns
    {name: LatencyStats}.
    """
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    if warmup < 0:
        raise ConfigError(f"warmup must be >= 0, got {warmup}")
    if not models:
        raise ConfigError("need at least one model to time")
    prepared = {}
    for name, (params, config) in models.items():
        singles = [np.ascontiguousarray(im[None], dtype=params.dtype)
                   for im in images]
        if not singles:
            raise ConfigError("need at least one image to time")
        prepared[name] = (params, config, singles)
    raws = {name: [] for name in prepared}
    with _single_thread():
        for i in range(warmup):
            for params, config, singles in prepared.values():
                model.forward(params, config, singles[i % len(singles)])
        for i in range(reps):
            for name, (params, config, singles) in prepared.items():
                x = singles[i % len(singles)]
                t0 = time.perf_counter_ns()
                model.forward(params, config, x)
                raws[name].append((time.perf_counter_ns() - t0) / 1e6)
    return {name: _stats_from_raw(raw, reps, warmup)
            for name, raw in raws.items()}


def latency_ordering_pvalue(faster_ms, slower_ms) -> float:
    """One-sided Mann-Whitney U p-value for 'faster < slower'."""
    res = _scipy_stats.mannwhitneyu(faster_ms, slower_ms, alternative="less")
    return float(res.pvalue)


def _checkpoint_path(checkpoints_dir, category, variant) -> Path:
    return Path(checkpoints_dir) / f"{category}_{variant}.fi2p"


def compare_variants(manifest: DatasetManifest, model_config_base,
                     train_config, checkpoints_dir, reps: int = 30,
                     warmup: int = 5, no_train: bool = False,
                     dtype=np.float32, log=None) -> BenchReport:
    """Per-(category, variant) latency, test-split Chamfer, checkpoint size.

    Checkpoints found under checkpoints_dir are reused; missing ones are
    trained with train_config unless no_train is set, which then raises.
    """
    checkpoints_dir = Path(checkpoints_dir)
    checkpoints_dir.mkdir(parents=True, exist_ok=True)
    report = BenchReport(
        element_width=np.dtype(dtype).itemsize,
        thread_note=(f"timed region pinned to 1 thread; FI2P_THREADS="
                     f"{os.environ.get('FI2P_THREADS', 'unset')}"),
        backend=kernels.backend_name(),
    )
    for category in manifest.categories:
        cat_manifest = _category_view(manifest, category)
        test_pairs = [
            load_sample(ref, manifest.root)
            for ref in cat_manifest.split_refs("test")
        ]
        if not test_pairs:
            raise ConfigError(f"category {category!r} has no test samples")
        images = [s.image for s in test_pairs]
        trained = {}
        for variant in model.VARIANTS:
            ckpt = _checkpoint_path(checkpoints_dir, category, variant)
            cfg = dataclasses.replace(model_config_base, variant=variant)
            if ckpt.exists():
                params, cfg = model.load_checkpoint(ckpt)
            elif no_train:
                raise ConfigError(
                    f"checkpoint {ckpt} missing and training is disabled"
                )
            else:
                if log:
                    log(f"training {category}/{variant} ...")
                params, _ = train.train(cfg, train_config, cat_manifest,
                                        dtype=dtype)
                model.save_checkpoint(params, cfg, ckpt)
            trained[variant] = (params, cfg)
        timed = time_inference_many(trained, images, warmup=warmup, reps=reps)
        for variant in model.VARIANTS:
            params, cfg = trained[variant]
            stats = timed[variant]
            mean_chamfer = train.evaluate(params, cfg, cat_manifest, "test")
            report.rows.append(BenchRow(
                category=category,
                variant=variant,
                stats=stats,
                mean_chamfer=mean_chamfer,
                checkpoint_bytes=model.checkpoint_bytes(params, cfg),
            ))
            if log:
                s = stats
                log(f"{category}/{variant}: mean {s.mean_ms:.3f} ms, "
                    f"median {s.median_ms:.3f} ms, chamfer {mean_chamfer:.4g}")
    return report


def _category_view(manifest: DatasetManifest, category: str) -> DatasetManifest:
    refs = [s for s in manifest.samples if s.category == category]
    if not refs:
        raise ConfigError(f"category {category!r} not present in manifest")
    return DatasetManifest(
        seed=manifest.seed, categories=[category], samples=refs,
        image_size=manifest.image_size, point_count=manifest.point_count,
        root=manifest.root,
    )
