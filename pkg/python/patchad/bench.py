"""
Model size, FLOP and latency measurements
"""

from __future__ import annotations

import logging
import time
from collections.abc import Sequence

import attrs
import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from patchad.autograd import count_flops, no_grad
from patchad.errors import ConfigError
from patchad.model import ModelConfig, PatchADModel

logger = logging.getLogger(__name__)


def estimate_flops(model: PatchADModel) -> int:
    """Matmul FLOPs (``2*m*n*k`` each) of one forward pass over a single window"""
    x = np.zeros((1, model.config.window, model.config.channels))
    with no_grad(), count_flops() as counter:
        model(x)
    return counter[0]


def measure_latency(
    model: PatchADModel, iterations: int = 100, warmup: int = 3
) -> float:
    """
    Median wall-clock seconds of a forward pass over one window

    Runs with a single BLAS thread.
    """
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, model.config.window, model.config.channels))
    timings = []
    with threadpool_limits(limits=1), no_grad():
        for _ in range(warmup):
            model(x)
        for _ in range(iterations):
            began = time.perf_counter()
            model(x)
            timings.append(time.perf_counter() - began)
    return float(np.median(timings))


@attrs.frozen
class BenchRow:
    window: int
    param_count: int
    flops: int
    latency: float


@attrs.frozen
class ScalingFit:
    rows: tuple[BenchRow, ...]
    slope: float
    intercept: float
    r_squared: float


def bench(config: ModelConfig, iterations: int = 100) -> BenchRow:
    model = PatchADModel(config)
    row = BenchRow(
        window=config.window,
        param_count=model.param_count(),
        flops=estimate_flops(model),
        latency=measure_latency(model, iterations),
    )
    logger.info(
        "window %s: %s parameters, %s FLOPs, %.3g ms",
        row.window,
        row.param_count,
        row.flops,
        row.latency * 1e3,
    )
    return row


def latency_scaling(
    base: ModelConfig, windows: Sequence[int], iterations: int = 100
) -> ScalingFit:
    """
    Bench ``base`` at every window length and fit latency linearly against it

    Window lengths that some patch size of ``base`` does not divide are
    skipped with a warning.

    Raises
    ------
    ConfigError
        Fewer than two window lengths are left to fit
    """
    usable = [w for w in windows if all(w % p == 0 for p in base.patch_sizes)]
    skipped = sorted(set(windows) - set(usable))
    if skipped:
        logger.warning(
            "Skipping window lengths %s: not divisible by every patch size of %s",
            skipped,
            list(base.patch_sizes),
        )
    if len(usable) < 2:  # noqa: PLR2004
        raise ConfigError(
            f"need at least two window lengths divisible by {list(base.patch_sizes)}, "
            f"got {list(usable)}"
        )
    rows = tuple(bench(attrs.evolve(base, window=w), iterations) for w in usable)
    fit = stats.linregress([r.window for r in rows], [r.latency for r in rows])
    return ScalingFit(
        rows=rows,
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(fit.rvalue**2),
    )
