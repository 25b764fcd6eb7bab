"""
Common data and model setups
"""

from patchad.data import LabeledSeries, normalize, zscore_fit
from patchad.model import ModelConfig
from patchad.synthetic import AnomalySpec, SynthSpec, synth_generate
from patchad.trainer import TrainConfig


def example_series(
    length: int = 3000, channels: int = 3, seed: int = 0
) -> tuple[LabeledSeries, LabeledSeries]:
    """
    Build a clean training series and a test series with one anomaly of each kind

    Parameters
    ----------
    length
        Timestamps in each of the two series
    channels
        Number of channels
    seed
        Seed of the generator

    Returns
    -------
        The training and test series, both normalised with the training statistics
    """
    train = synth_generate(
        SynthSpec(length=length, channels=channels, period=30, seed=seed)
    )
    step = length // 6
    anomalies = [
        AnomalySpec(kind="global_point", start=step, duration=2),
        AnomalySpec(kind="contextual_point", start=2 * step, duration=3),
        AnomalySpec(kind="seasonal", start=3 * step, duration=60, magnitude=2.0),
        AnomalySpec(kind="group_point", start=4 * step, duration=30, magnitude=4.0),
        AnomalySpec(kind="trend", start=5 * step, duration=40, magnitude=0.5),
    ]
    test = synth_generate(
        SynthSpec(
            length=length,
            channels=channels,
            period=30,
            anomalies=anomalies,
            seed=seed + 1,
        )
    )
    stats = zscore_fit(train)
    return normalize(train, stats), normalize(test, stats)


def small_train_config(channels: int = 3, **model_overrides) -> TrainConfig:
    """A model small enough to train in a notebook within a minute"""
    model = ModelConfig(
        channels=channels,
        window=60,
        patch_sizes=(3, 5),
        d_model=16,
        layers=2,
        **model_overrides,
    )
    return TrainConfig(model=model, epochs=3, batch_size=32, learning_rate=1e-3)
