"""
Training loop

Windows are cut from a normalised training series, batched in order and fed
through forward, loss, backward and one Adam step per batch. Everything is
determined by the config: the same seed gives bit-identical parameters.
"""

from __future__ import annotations

import json
import logging
import os
import time
from collections.abc import Mapping
from typing import Any

import attrs
import numpy as np

from patchad.autograd import backward
from patchad.checkpoint import save_checkpoint
from patchad.config import from_parameters, positive, to_parameters
from patchad.data import LabeledSeries, gather_windows, window_starts
from patchad.diagnostics import feature_entropy_report
from patchad.errors import ConfigError, NumericError
from patchad.io import atomic_write
from patchad.model import ModelConfig, PatchADModel
from patchad.objective import LossVariant, RowDistance, distance_for, total_loss
from patchad.optim import Adam

logger = logging.getLogger(__name__)

ENTROPY_SAMPLE_WINDOWS = 128


def _model_config(value: Any) -> ModelConfig:
    if isinstance(value, ModelConfig):
        return value
    return ModelConfig.from_parameters(value)


@attrs.frozen(kw_only=True)
class TrainConfig:
    """
    Settings of one training run

    ``seed`` seeds the parameter initialisation and, when ``shuffle`` is on,
    the batch order. It overrides ``model.seed``.
    """

    model: ModelConfig = attrs.field(converter=_model_config)
    epochs: int = attrs.field(default=3, validator=positive)
    batch_size: int = attrs.field(default=128, validator=positive)
    learning_rate: float = attrs.field(default=1e-4, converter=float)
    stride: int | None = attrs.field(default=None)
    seed: int = 0
    diagnostics: bool = True
    loss: LossVariant = attrs.field(default=LossVariant.KL, converter=LossVariant)
    shuffle: bool = False

    @stride.validator
    def _check_stride(self, attribute, value: int | None) -> None:
        if value is not None:
            positive(self, attribute, value)

    @classmethod
    def from_parameters(cls, parameters: Mapping[str, Any]) -> TrainConfig:
        return from_parameters(cls, parameters, nested={"model": ModelConfig})

    def to_parameters(self) -> dict[str, Any]:
        return to_parameters(self)


def loss_variant_dispatch(kind: LossVariant | str) -> RowDistance:
    """Row-wise base distance used inside the discrepancy for ``kind``"""
    return distance_for(kind)


@attrs.frozen
class StepRecord:
    step: int
    epoch: int
    total: float
    l_cont: float
    l_proj: float
    l_rec: float


@attrs.frozen
class EpochRecord:
    epoch: int
    wall_time: float
    mean_total: float
    mean_l_rec: float
    entropy: dict[str, dict[str, float | None]] | None = None


@attrs.define
class TrainLog:
    """
    One record per optimiser step and one per finished epoch

    With diagnostics on, ``initial_entropy`` holds the feature entropy of the
    freshly initialised model, so ``n`` epochs give ``n`` entropy transitions.
    """

    steps: list[StepRecord] = attrs.field(factory=list)
    epochs: list[EpochRecord] = attrs.field(factory=list)
    initial_entropy: dict[str, dict[str, float | None]] | None = None

    def records(self) -> list[dict[str, Any]]:
        out = []
        if self.initial_entropy is not None:
            out.append({"type": "initial", "entropy": self.initial_entropy})
        out += [{"type": "step", **attrs.asdict(s)} for s in self.steps]
        out += [{"type": "epoch", **attrs.asdict(e)} for e in self.epochs]
        return out

    def entropy_series(self, patch_size: int, view: str) -> list[float | None]:
        """Entropy of one view before training and after every epoch"""
        snapshots = [self.initial_entropy, *(e.entropy for e in self.epochs)]
        if any(s is None for s in snapshots):
            raise ConfigError("training ran without diagnostics")
        return [s[str(patch_size)][view] for s in snapshots]

    def write_jsonl(self, path: str | os.PathLike[str]) -> None:
        with atomic_write(path) as fh:
            for record in self.records():
                fh.write(json.dumps(record) + "\n")


def _batches(
    starts: np.ndarray, batch_size: int, rng: np.random.Generator | None
) -> list[np.ndarray]:
    order = starts if rng is None else rng.permutation(starts)
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def _entropy_snapshot(
    model: PatchADModel, series: LabeledSeries, starts: np.ndarray, window: int
) -> dict[str, dict[str, float | None]]:
    sample = gather_windows(series.values, starts[:ENTROPY_SAMPLE_WINDOWS], window)
    return {str(k): v for k, v in feature_entropy_report(model, sample).items()}


def _halt(
    model: PatchADModel,
    last_good: dict[str, np.ndarray],
    checkpoint_path: str | os.PathLike[str] | None,
    series: LabeledSeries,
    message: str,
) -> NumericError:
    model.load_state_dict(last_good)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model, series.stats)
        message += f"; last good parameters saved to {checkpoint_path}"
    logger.error(message)
    return NumericError(message)


def train(
    series: LabeledSeries,
    config: TrainConfig,
    checkpoint_path: str | os.PathLike[str] | None = None,
) -> tuple[PatchADModel, TrainLog]:
    """
    Train a fresh model on a normalised series

    Trailing timestamps that do not fill a window are not used.

    Parameters
    ----------
    series
        Normalised training series
    config
        Training settings
    checkpoint_path
        Where the last good parameters are saved if training diverges

    Raises
    ------
    NumericError
        The loss or a gradient became NaN. The model is reset to the last
        parameters with a finite loss before the error is raised.
    """
    model = PatchADModel(attrs.evolve(config.model, seed=config.seed))
    optimiser = Adam(model.parameters(), config.learning_rate)
    window = config.model.window
    starts = window_starts(series.length, window, config.stride or window)
    rng = np.random.default_rng(config.seed) if config.shuffle else None
    log = TrainLog()
    if config.diagnostics:
        log.initial_entropy = _entropy_snapshot(model, series, starts, window)
    logger.info(
        "Training %s parameters on %s windows for %s epochs",
        model.param_count(),
        len(starts),
        config.epochs,
    )

    step = 0
    for epoch in range(config.epochs):
        began = time.perf_counter()
        first_step = len(log.steps)
        for batch_starts in _batches(starts, config.batch_size, rng):
            x = gather_windows(series.values, batch_starts, window)
            last_good = model.state_dict()
            optimiser.zero_grad()
            losses = total_loss(model(x), x, config.model.constraint, config.loss)
            components = losses.components()
            if not np.isfinite(components["total"]):
                raise _halt(
                    model, last_good, checkpoint_path, series,
                    f"loss is {components['total']} at step {step}",
                )
            backward(losses.total)
            try:
                optimiser.step()
            except NumericError as exc:
                raise _halt(
                    model, last_good, checkpoint_path, series, str(exc)
                ) from exc
            log.steps.append(StepRecord(step=step, epoch=epoch, **components))
            logger.debug("step %s: %s", step, components)
            step += 1

        epoch_steps = log.steps[first_step:]
        entropy = (
            _entropy_snapshot(model, series, starts, window)
            if config.diagnostics
            else None
        )
        record = EpochRecord(
            epoch=epoch,
            wall_time=time.perf_counter() - began,
            mean_total=float(np.mean([s.total for s in epoch_steps])),
            mean_l_rec=float(np.mean([s.l_rec for s in epoch_steps])),
            entropy=entropy,
        )
        log.epochs.append(record)
        logger.info(
            "Epoch %s: loss %.6g, reconstruction %.6g, %.1fs",
            epoch,
            record.mean_total,
            record.mean_l_rec,
            record.wall_time,
        )
    return model, log
