"""
The multi-scale patch mixer network

Every scale branch patches the (positionally embedded) window, embeds an
inter-patch view ``(B, C, N, D)`` and an intra-patch view ``(B, C, P, D)``,
and refines both through a stack of encoder layers made of four mixers.
Per-layer outputs are averaged over channels and combined with learned layer
weights; projection heads give the auxiliary views and two linear heads
reconstruct the input window.
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Iterator, Mapping
from typing import Any

import attrs
import numpy as np

from patchad import functional as F
from patchad.autograd import (
    Parameter,
    Tensor,
    as_tensor,
    flatten_last2,
    softmax,
    transpose_dim,
)
from patchad.config import from_parameters, positive, to_parameters, unit_interval
from patchad.errors import ConfigError, ShapeError
from patchad.functional import Activation
from patchad.nn import LayerNorm, Linear, Module

logger = logging.getLogger(__name__)


class ReconstructFrom(str, enum.Enum):
    """Which encoder features feed the reconstruction heads"""

    REWEIGHTED = "reweighted"
    LAST_LAYER = "last_layer"


def _patch_sizes(value: Any) -> tuple[int, ...]:
    if isinstance(value, int):
        return (value,)
    return tuple(int(v) for v in value)


@attrs.frozen(kw_only=True)
class ModelConfig:
    """
    Hyperparameters of the network

    Attributes
    ----------
    channels
        Number of input channels ``C``
    window
        Window length ``T``; every patch size must divide it
    patch_sizes
        One scale branch per patch size ``P``
    d_model
        Embedding width ``D``
    layers
        Number of encoder layers ``L``
    constraint
        Weight ``c`` of the projection constraint in the objective
    activation
        Non-linearity inside the mixers
    seed
        Seed of the parameter initialisation
    """

    channels: int = attrs.field(validator=positive)
    window: int = attrs.field(default=105, validator=positive)
    patch_sizes: tuple[int, ...] = attrs.field(default=(3, 5), converter=_patch_sizes)
    d_model: int = attrs.field(default=40, validator=positive)
    layers: int = attrs.field(default=3, validator=positive)
    constraint: float = attrs.field(
        default=0.2, converter=float, validator=unit_interval
    )
    activation: Activation = attrs.field(default=Activation.GELU, converter=Activation)
    seed: int = 0
    use_positional_embedding: bool = True
    use_channel_mixer: bool = True
    share_channel_mixer: bool = True
    use_mixrep_mixer: bool = True
    share_mixrep_mixer: bool = True
    reconstruct_from: ReconstructFrom = attrs.field(
        default=ReconstructFrom.REWEIGHTED, converter=ReconstructFrom
    )

    @patch_sizes.validator
    def _check_patch_sizes(self, _attribute, value: tuple[int, ...]) -> None:
        if not value:
            raise ConfigError("at least one patch size is required")
        for size in value:
            if size < 1 or self.window % size:
                raise ConfigError(
                    f"patch size {size} does not divide the window length {self.window}"
                )

    @classmethod
    def from_parameters(cls, parameters: Mapping[str, Any]) -> ModelConfig:
        return from_parameters(cls, parameters)

    def to_parameters(self) -> dict[str, Any]:
        return to_parameters(self)


def positional_encoding(length: int, channels: int) -> np.ndarray:
    """
    Fixed sinusoidal table of shape ``(length, channels)``

    Even columns hold ``sin(pos / 10000^(2i/C))``, odd columns the matching cosine.
    """
    position = np.arange(length, dtype=float)[:, None]
    pair = np.arange(0, channels, 2, dtype=float)
    frequency = np.exp(-np.log(10000.0) * pair / channels)
    table = np.zeros((length, channels))
    table[:, 0::2] = np.sin(position * frequency)
    table[:, 1::2] = np.cos(position * frequency[: channels // 2])
    return table


def positional_embed(x: Tensor) -> Tensor:
    """Add the sinusoidal table to a ``(B, T, C)`` batch"""
    return x + positional_encoding(x.shape[1], x.shape[2])


def patching(x: Tensor, patch_size: int) -> Tensor:
    """
    Split ``(B, T, C)`` into ``(B, C, N, P)`` non-overlapping patches

    Raises
    ------
    ConfigError
        ``patch_size`` does not divide ``T``
    """
    batch, length, channels = x.shape
    if patch_size < 1 or length % patch_size:
        raise ConfigError(
            f"patch size {patch_size} does not divide the window length {length}"
        )
    return x.permute(0, 2, 1).reshape(
        batch, channels, length // patch_size, patch_size
    )


def unpatch(patches: Tensor) -> Tensor:
    """Inverse of :func:`patching`"""
    batch, channels, count, size = patches.shape
    return patches.reshape(batch, channels, count * size).permute(0, 2, 1)


class ValueEmbedding(Module):
    """
    Separate linear embeddings of the patch rows (``P -> D``) and columns
    (``N -> D``)
    """

    def __init__(self, patch_size: int, num_patches: int, d_model: int, rng):
        self.inter = Linear(patch_size, d_model, rng)
        self.intra = Linear(num_patches, d_model, rng)

    def forward(self, patches: Tensor) -> tuple[Tensor, Tensor]:
        inter = self.inter(patches)
        intra = self.intra(transpose_dim(patches, patches.ndim - 2))
        return inter, intra


class MLPBlock(Module):
    """
    Residual two-layer MLP mixing along one axis

    The axis is swapped to the end, normalised, passed through
    ``FC -> activation -> FC`` of square width and swapped back before the
    residual is added.
    """

    def __init__(self, axis: int, features: int, activation: Activation, rng):
        self.axis = axis
        self.activation = activation
        self.norm = LayerNorm(features)
        self.fc1 = Linear(features, features, rng)
        self.fc2 = Linear(features, features, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = transpose_dim(x, self.axis)
        h = self.fc2(F.activation(self.fc1(self.norm(h)), self.activation))
        return x + transpose_dim(h, self.axis)


class EncoderLayer(Module):
    """
    Channel, inter/intra and representation mixing of both views

    Channel and MixRep mixers are the same objects for both paths unless the
    config disables sharing; the Inter and Intra mixers are always separate.
    """

    def __init__(self, config: ModelConfig, patch_size: int, rng):
        num_patches = config.window // patch_size
        act = config.activation
        self.channel_mixer_inter: MLPBlock | None = None
        self.channel_mixer_intra: MLPBlock | None = None
        if config.use_channel_mixer:
            self.channel_mixer_inter = MLPBlock(1, config.channels, act, rng)
            self.channel_mixer_intra = (
                self.channel_mixer_inter
                if config.share_channel_mixer
                else MLPBlock(1, config.channels, act, rng)
            )
        self.inter_mixer = MLPBlock(2, num_patches, act, rng)
        self.intra_mixer = MLPBlock(2, patch_size, act, rng)
        self.mixrep_mixer_inter: MLPBlock | None = None
        self.mixrep_mixer_intra: MLPBlock | None = None
        if config.use_mixrep_mixer:
            self.mixrep_mixer_inter = MLPBlock(3, config.d_model, act, rng)
            self.mixrep_mixer_intra = (
                self.mixrep_mixer_inter
                if config.share_mixrep_mixer
                else MLPBlock(3, config.d_model, act, rng)
            )

    def forward(self, inter: Tensor, intra: Tensor) -> tuple[Tensor, Tensor]:
        if self.channel_mixer_inter is not None:
            inter = self.channel_mixer_inter(inter)
            intra = self.channel_mixer_intra(intra)
        inter = self.inter_mixer(inter)
        intra = self.intra_mixer(intra)
        if self.mixrep_mixer_inter is not None:
            inter = self.mixrep_mixer_inter(inter)
            intra = self.mixrep_mixer_intra(intra)
        return inter, intra


class ProjectHead(Module):
    """Two stacked linear maps with no activation, normalisation or residual"""

    def __init__(self, d_model: int, rng):
        self.fc1 = Linear(d_model, d_model, rng)
        self.fc2 = Linear(d_model, d_model, rng)

    def forward(self, h: Tensor) -> Tensor:
        return self.fc2(self.fc1(h))


def reweight_combine(layers: list[Tensor], logits: Tensor) -> Tensor:
    """
    Weighted sum of same-shaped tensors with weights ``softmax(logits)``

    Raises
    ------
    ShapeError
        ``layers`` is empty or does not match the number of logits
    """
    if not layers:
        raise ShapeError("cannot combine an empty list of layers")
    if len(layers) != logits.shape[0]:
        raise ShapeError(f"{len(layers)} layers but {logits.shape[0]} weights")
    weights = softmax(logits, axis=0)
    out = layers[0] * weights[0]
    for i, layer in enumerate(layers[1:], start=1):
        out = out + layer * weights[i]
    return out


class ReWeight(Module):
    """Learned convex combination of per-layer outputs, uniform at initialisation"""

    def __init__(self, layers: int):
        self.logits = Parameter(np.zeros(layers))

    @property
    def weights(self) -> np.ndarray:
        e = np.exp(self.logits.data - self.logits.data.max())
        return e / e.sum()

    def forward(self, layers: list[Tensor]) -> Tensor:
        return reweight_combine(layers, self.logits)


class Reconstruction(Module):
    """Linear heads from the flattened inter and intra features back to ``T`` steps"""

    def __init__(self, window: int, patch_size: int, d_model: int, rng):
        num_patches = window // patch_size
        self.inter = Linear(num_patches * d_model, window, rng)
        self.intra = Linear(patch_size * d_model, window, rng)

    def forward(self, inter: Tensor, intra: Tensor) -> Tensor:
        summed = self.inter(flatten_last2(inter)) + self.intra(flatten_last2(intra))
        return summed.permute(0, 2, 1)


@attrs.frozen
class ScaleOutputs:
    """
    Views produced by one scale branch

    ``inter``/``inter_proj`` are ``(B, N, D)``, ``intra``/``intra_proj`` are
    ``(B, P, D)`` and ``reconstruction`` is ``(B, T, C)``.
    """

    patch_size: int
    num_patches: int
    inter: Tensor
    intra: Tensor
    inter_proj: Tensor
    intra_proj: Tensor
    reconstruction: Tensor


@attrs.frozen
class ForwardOutputs:
    """Per-scale outputs in the order of ``ModelConfig.patch_sizes``"""

    scales: tuple[ScaleOutputs, ...]

    def __iter__(self) -> Iterator[ScaleOutputs]:
        return iter(self.scales)

    def __len__(self) -> int:
        return len(self.scales)

    def __getitem__(self, index: int) -> ScaleOutputs:
        return self.scales[index]


class ScaleBranch(Module):
    """All parameters belonging to one patch size"""

    def __init__(self, config: ModelConfig, patch_size: int, rng):
        self.patch_size = patch_size
        self.num_patches = config.window // patch_size
        self.reconstruct_from = config.reconstruct_from
        self.value_embedding = ValueEmbedding(
            patch_size, self.num_patches, config.d_model, rng
        )
        depth = range(config.layers)
        self.layers = [EncoderLayer(config, patch_size, rng) for _ in depth]
        self.inter_heads = [ProjectHead(config.d_model, rng) for _ in depth]
        self.intra_heads = [ProjectHead(config.d_model, rng) for _ in depth]
        self.reweight_inter = ReWeight(config.layers)
        self.reweight_intra = ReWeight(config.layers)
        self.reconstruction = Reconstruction(
            config.window, patch_size, config.d_model, rng
        )

    def forward(self, x: Tensor) -> ScaleOutputs:
        inter, intra = self.value_embedding(patching(x, self.patch_size))
        inter_layers: list[Tensor] = []
        intra_layers: list[Tensor] = []
        for layer in self.layers:
            inter, intra = layer(inter, intra)
            inter_layers.append(inter)
            intra_layers.append(intra)

        inter_means = [h.mean(axis=1) for h in inter_layers]
        intra_means = [h.mean(axis=1) for h in intra_layers]
        inter_proj = [head(h) for head, h in zip(self.inter_heads, inter_means)]
        intra_proj = [head(h) for head, h in zip(self.intra_heads, intra_means)]

        if self.reconstruct_from is ReconstructFrom.REWEIGHTED:
            rec_inter = self.reweight_inter(inter_layers)
            rec_intra = self.reweight_intra(intra_layers)
        else:
            rec_inter, rec_intra = inter_layers[-1], intra_layers[-1]

        return ScaleOutputs(
            patch_size=self.patch_size,
            num_patches=self.num_patches,
            inter=self.reweight_inter(inter_means),
            intra=self.reweight_intra(intra_means),
            inter_proj=self.reweight_inter(inter_proj),
            intra_proj=self.reweight_intra(intra_proj),
            reconstruction=self.reconstruction(rec_inter, rec_intra),
        )


class PatchADModel(Module):
    """
    The complete network: one :class:`ScaleBranch` per patch size

    Parameters are initialised deterministically from ``config.seed``.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.branches = [ScaleBranch(config, size, rng) for size in config.patch_sizes]
        logger.debug(
            "Built model with %s parameters for patch sizes %s",
            self.param_count(),
            config.patch_sizes,
        )

    def forward(self, x: Tensor | np.ndarray) -> ForwardOutputs:
        """
        Run every scale branch on a normalised ``(B, T, C)`` batch

        Raises
        ------
        ShapeError
            ``x`` is not ``(B, window, channels)``
        """
        x = as_tensor(x)
        expected = (self.config.window, self.config.channels)
        if x.ndim != 3 or x.shape[1:] != expected:  # noqa: PLR2004
            raise ShapeError(
                f"expected input (B, {self.config.window}, {self.config.channels}), "
                f"got {x.shape}"
            )
        if self.config.use_positional_embedding:
            x = positional_embed(x)
        return ForwardOutputs(tuple(branch(x) for branch in self.branches))


def param_count(model: Module) -> int:
    """Number of learnable scalars, each shared parameter counted once"""
    return model.param_count()


def param_breakdown(model: Module) -> dict[str, int]:
    """Learnable scalars per owning module, keyed by module path"""
    breakdown: dict[str, int] = {}
    for name, p in model.named_parameters():
        owner = name.rsplit(".", 1)[0]
        breakdown[owner] = breakdown.get(owner, 0) + p.size
    return breakdown
