"""
The inter-intra discrepancy objective

Both views are upsampled to the window length, every time step is turned into
a distribution over the embedding axis with a softmax, and the views are
compared with a row-wise base distance. One operand of every comparison is
detached, so the contrastive terms are zero in value but not in gradient.
"""

from __future__ import annotations

import enum
from collections.abc import Callable

import attrs

from patchad import functional as F
from patchad.autograd import (
    Tensor,
    clip_min,
    repeat_interleave,
    softmax,
    stop_gradient,
    tile,
)
from patchad.errors import ConfigError, ShapeError
from patchad.model import ForwardOutputs

PROB_FLOOR = 1e-12

RowDistance = Callable[[Tensor, Tensor], Tensor]


class LossVariant(str, enum.Enum):
    """Base distance inside the discrepancy"""

    KL = "kl"
    L2 = "l2"
    JSD = "jsd"


def upsample_inter(inter: Tensor, patch_size: int) -> Tensor:
    """Repeat each of the ``N`` patch rows ``P`` times: ``(B, N, D) -> (B, N*P, D)``"""
    return repeat_interleave(inter, patch_size, axis=1)


def upsample_intra(intra: Tensor, num_patches: int) -> Tensor:
    """Tile the ``P`` rows ``N`` times: ``(B, P, D) -> (B, N*P, D)``"""
    return tile(intra, num_patches, axis=1)


def _log_probs(x: Tensor) -> tuple[Tensor, Tensor]:
    p = softmax(x, axis=-1)
    return p, clip_min(p, PROB_FLOOR).log()


def kl_rowwise(a: Tensor, b: Tensor) -> Tensor:
    """
    ``KL(softmax(a_t) || softmax(b_t))`` for every row ``t``

    Probabilities are clamped at ``1e-12`` before the logarithm.
    Input ``(..., D)``, output ``(...)``.
    """
    p, log_p = _log_probs(a)
    _, log_q = _log_probs(b)
    return (p * (log_p - log_q)).sum(axis=-1)


def l2_rowwise(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference of the softmaxed rows"""
    diff = softmax(a, axis=-1) - softmax(b, axis=-1)
    return (diff * diff).mean(axis=-1)


def jsd_rowwise(a: Tensor, b: Tensor) -> Tensor:
    """Jensen-Shannon divergence of the softmaxed rows, bounded by ``ln 2``"""
    p, log_p = _log_probs(a)
    q, log_q = _log_probs(b)
    m = (p + q) * 0.5
    log_m = clip_min(m, PROB_FLOOR).log()
    left = (p * (log_p - log_m)).sum(axis=-1)
    right = (q * (log_q - log_m)).sum(axis=-1)
    return left * 0.5 + right * 0.5


_DISTANCES: dict[LossVariant, RowDistance] = {
    LossVariant.KL: kl_rowwise,
    LossVariant.L2: l2_rowwise,
    LossVariant.JSD: jsd_rowwise,
}


def distance_for(kind: LossVariant | str) -> RowDistance:
    """
    Row-wise base distance for a loss variant

    Raises
    ------
    ConfigError
        ``kind`` is not one of ``kl``, ``l2`` or ``jsd``
    """
    try:
        return _DISTANCES[LossVariant(kind)]
    except ValueError as exc:
        raise ConfigError(
            f"unknown loss variant {kind!r}, expected kl, l2 or jsd"
        ) from exc


def discrepancy(a: Tensor, b: Tensor, distance: RowDistance = kl_rowwise) -> Tensor:
    """
    ``mean(d(a, sg(b)) + d(sg(b), a))`` over batch and time

    Gradient reaches only ``a``.
    """
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare shapes {a.shape} and {b.shape}")
    fixed = stop_gradient(b)
    return (distance(a, fixed) + distance(fixed, a)).mean()


def cont_loss(
    inter: Tensor, intra: Tensor, distance: RowDistance = kl_rowwise
) -> Tensor:
    """``(disc(N, P) - disc(P, N)) / T`` on upsampled views"""
    length = inter.shape[1]
    gap = discrepancy(inter, intra, distance) - discrepancy(intra, inter, distance)
    return gap / length


def proj_loss(
    inter: Tensor,
    intra: Tensor,
    inter_proj: Tensor,
    intra_proj: Tensor,
    distance: RowDistance = kl_rowwise,
) -> Tensor:
    """
    Cross-paired projection constraint, each projected view against the other
    raw view
    """
    length = inter.shape[1]
    first = discrepancy(inter_proj, intra, distance)
    first = first - discrepancy(intra, inter_proj, distance)
    second = discrepancy(inter, intra_proj, distance)
    second = second - discrepancy(intra_proj, inter, distance)
    return first / length + second / length


def rec_loss(reconstruction: Tensor, x: Tensor) -> Tensor:
    if reconstruction.shape != x.shape:
        raise ShapeError(f"cannot compare shapes {reconstruction.shape} and {x.shape}")
    return F.mse(reconstruction, x)


@attrs.frozen
class ScaleLoss:
    patch_size: int
    l_cont: Tensor
    l_proj: Tensor
    l_rec: Tensor
    total: Tensor


@attrs.frozen
class LossBundle:
    """
    Loss components averaged over scales

    ``total == (1 - c) * l_cont + c * l_proj + l_rec``; ``scales`` keeps the
    per-scale terms.
    """

    l_cont: Tensor
    l_proj: Tensor
    l_rec: Tensor
    total: Tensor
    scales: tuple[ScaleLoss, ...]

    def components(self) -> dict[str, float]:
        return {
            "total": self.total.item(),
            "l_cont": self.l_cont.item(),
            "l_proj": self.l_proj.item(),
            "l_rec": self.l_rec.item(),
        }


def _mean(values: list[Tensor]) -> Tensor:
    out = values[0]
    for v in values[1:]:
        out = out + v
    return out / len(values)


def total_loss(
    outputs: ForwardOutputs,
    x: Tensor,
    constraint: float,
    variant: LossVariant | str = LossVariant.KL,
) -> LossBundle:
    """
    Combine the per-scale objectives with equal weight

    Parameters
    ----------
    outputs
        Result of the model's forward pass on ``x``
    x
        The ``(B, T, C)`` input batch
    constraint
        Weight ``c`` of the projection constraint, in ``[0, 1]``
    variant
        Base distance of the discrepancy

    Raises
    ------
    ConfigError
        ``constraint`` lies outside ``[0, 1]`` or ``variant`` is unknown
    """
    if not 0.0 <= constraint <= 1.0:
        raise ConfigError(f"constraint must lie in [0, 1], got {constraint}")
    distance = distance_for(variant)
    scales = []
    for scale in outputs:
        inter = upsample_inter(scale.inter, scale.patch_size)
        intra = upsample_intra(scale.intra, scale.num_patches)
        inter_proj = upsample_inter(scale.inter_proj, scale.patch_size)
        intra_proj = upsample_intra(scale.intra_proj, scale.num_patches)
        l_cont = cont_loss(inter, intra, distance)
        l_proj = proj_loss(inter, intra, inter_proj, intra_proj, distance)
        l_rec = rec_loss(scale.reconstruction, x)
        total = l_cont * (1.0 - constraint) + l_proj * constraint + l_rec
        scales.append(ScaleLoss(scale.patch_size, l_cont, l_proj, l_rec, total))

    return LossBundle(
        l_cont=_mean([s.l_cont for s in scales]),
        l_proj=_mean([s.l_proj for s in scales]),
        l_rec=_mean([s.l_rec for s in scales]),
        total=_mean([s.total for s in scales]),
        scales=tuple(scales),
    )
