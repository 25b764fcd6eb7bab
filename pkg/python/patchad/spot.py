"""
Streaming peaks-over-threshold (SPOT) thresholding

Calibration scores above an initial high quantile ``t`` are peaks. A
generalised Pareto distribution fitted to the excesses gives the threshold
``z_q`` that a score exceeds with probability ``q``. Stream points above
``z_q`` are anomalies; points between ``t`` and ``z_q`` join the peaks and the
distribution is refitted.
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Callable

import attrs
import numpy as np
from scipy import stats
from scipy.optimize import minimize

from patchad.errors import ConfigError, DataError
from patchad.scoring import threshold_by_ratio

logger = logging.getLogger(__name__)

MIN_PEAKS = 10
FALLBACK_SIGMA = 1.0


class GPDFit(str, enum.Enum):
    """How the generalised Pareto parameters are estimated"""

    GRIMSHAW = "grimshaw"
    MOMENTS = "moments"


def gpd_log_likelihood(excesses: np.ndarray, gamma: float, sigma: float) -> float:
    """
    Log-likelihood of excesses under a GPD with shape ``gamma`` and scale
    ``sigma``
    """
    n = excesses.size
    if gamma == 0:
        return -n * np.log(sigma) - excesses.sum() / sigma
    s = 1.0 + gamma / sigma * excesses
    if sigma <= 0 or np.any(s <= 0):
        return -np.inf
    return -n * np.log(sigma) - (1.0 + 1.0 / gamma) * np.log(s).sum()


def _roots(
    fun: Callable[[float], float],
    jac: Callable[[float], float],
    bounds: tuple[float, float],
    npoints: int,
) -> np.ndarray:
    step = (bounds[1] - bounds[0]) / (npoints + 1)
    guess = bounds[0] + step * np.arange(1, npoints + 1)

    def objective(variable: np.ndarray) -> tuple[float, np.ndarray]:
        value = np.array([fun(v) for v in variable])
        gradient = np.array([jac(v) for v in variable])
        return float((value**2).sum()), 2 * value * gradient

    result = minimize(
        objective, guess, method="L-BFGS-B", jac=True, bounds=[bounds] * npoints
    )
    return np.unique(np.round(result.x, decimals=5))


def fit_grimshaw(
    excesses: np.ndarray,
    npoints: int = 10,
    epsilon: float = 1e-8,
    significance: float | None = 0.01,
) -> tuple[float, float]:
    """
    Maximum likelihood GPD fit by Grimshaw's reduction to a one-dimensional root search

    ``gamma = 0`` with ``sigma = mean(excesses)`` is always a candidate. A
    non-zero shape is kept only when a likelihood ratio test against that
    exponential tail rejects at ``significance``; ``None`` keeps the plain
    maximum likelihood estimate.
    """
    y_min, y_max, y_mean = excesses.min(), excesses.max(), excesses.mean()

    def u(s: np.ndarray) -> float:
        return 1.0 + np.log(s).mean()

    def v(s: np.ndarray) -> float:
        return np.mean(1.0 / s)

    def w(x: float) -> float:
        s = 1.0 + x * excesses
        return u(s) * v(s) - 1.0

    def jac_w(x: float) -> float:
        s = 1.0 + x * excesses
        us, vs = u(s), v(s)
        jac_us = (1.0 - vs) / x
        jac_vs = (-vs + np.mean(1.0 / s**2)) / x
        return us * jac_vs + vs * jac_us

    lower = -1.0 / y_max
    if abs(lower) < 2 * epsilon:
        epsilon = abs(lower) / npoints
    candidates = [_roots(w, jac_w, (lower + 2 * epsilon, -epsilon), npoints)]
    if y_mean > y_min > 0 and not np.isclose(y_mean, y_min):
        b = 2 * (y_mean - y_min) / (y_mean * y_min)
        c = 2 * (y_mean - y_min) / y_min**2
        candidates.append(_roots(w, jac_w, (b, c), npoints))

    best = (0.0, float(y_mean))
    best_ll = gpd_log_likelihood(excesses, *best)
    for x in np.concatenate(candidates):
        if x == 0:
            continue
        gamma = u(1.0 + x * excesses) - 1.0
        sigma = gamma / x
        ll = gpd_log_likelihood(excesses, gamma, sigma)
        if ll > best_ll:
            best, best_ll = (float(gamma), float(sigma)), ll
    if significance is not None and best[0] != 0.0:
        exponential_ll = gpd_log_likelihood(excesses, 0.0, float(y_mean))
        if 2 * (best_ll - exponential_ll) < stats.chi2.ppf(1.0 - significance, df=1):
            return 0.0, float(y_mean)
    return best


def fit_moments(excesses: np.ndarray) -> tuple[float, float]:
    """Method-of-moments GPD fit"""
    mean, var = excesses.mean(), excesses.var()
    if var <= 0:
        return 0.0, float(mean)
    ratio = mean**2 / var
    return float(0.5 * (1.0 - ratio)), float(0.5 * mean * (1.0 + ratio))


_FITTERS = {GPDFit.GRIMSHAW: fit_grimshaw, GPDFit.MOMENTS: fit_moments}


@attrs.define
class SpotState:
    """
    Running state of a SPOT detector

    ``peaks`` holds the excesses ``score - init_threshold`` of every point
    above ``init_threshold`` seen so far.
    """

    init_threshold: float
    peaks: np.ndarray
    observed: int
    gamma: float = 0.0
    sigma: float = 1.0
    q: float = 1e-4

    @property
    def num_peaks(self) -> int:
        return self.peaks.size

    @property
    def extreme_quantile(self) -> float:
        """``z_q``, never below the initial threshold"""
        r = self.q * self.observed / self.num_peaks
        if self.gamma == 0:
            excess = -self.sigma * np.log(r)
        else:
            excess = self.sigma / self.gamma * (r**-self.gamma - 1.0)
        return self.init_threshold + max(excess, 0.0)


@attrs.frozen(eq=False)
class SpotResult:
    flags: np.ndarray
    thresholds: np.ndarray
    fallback: bool = False


class Spot:
    """
    SPOT detector for upper-tail anomalies

    Parameters
    ----------
    q
        Risk: the probability of a normal score exceeding the threshold
    level
        Quantile of the calibration scores used as the initial threshold
    fit
        GPD estimator
    """

    def __init__(
        self, q: float = 1e-4, level: float = 0.98, fit: GPDFit | str = GPDFit.GRIMSHAW
    ):
        if not 0 < q < 1:
            raise ConfigError(f"q must lie in (0, 1), got {q}")
        if not 0 < level < 1:
            raise ConfigError(f"level must lie in (0, 1), got {level}")
        try:
            self.fit = GPDFit(fit)
        except ValueError as exc:
            raise ConfigError(f"unknown GPD fit {fit!r}") from exc
        self.q = q
        self.level = level
        self.state: SpotState | None = None

    def _refit(self) -> None:
        self.state.gamma, self.state.sigma = _FITTERS[self.fit](self.state.peaks)

    def initialize(self, calibration: np.ndarray) -> bool:
        """
        Fit the tail of the calibration scores

        Returns
        -------
            Whether enough peaks were found to fit the tail

        Raises
        ------
        DataError
            ``calibration`` is empty
        """
        calibration = np.asarray(calibration, dtype=float)
        if calibration.size == 0:
            raise DataError("SPOT needs at least one calibration score")
        init_threshold = float(np.percentile(calibration, 100 * self.level))
        peaks = calibration[calibration > init_threshold] - init_threshold
        self.state = SpotState(
            init_threshold=init_threshold,
            peaks=peaks,
            observed=calibration.size,
            q=self.q,
        )
        logger.debug("Initial threshold %s with %s peaks", init_threshold, peaks.size)
        if peaks.size < MIN_PEAKS:
            return False
        self._refit()
        logger.debug(
            "gamma = %s, sigma = %s, z_q = %s",
            self.state.gamma,
            self.state.sigma,
            self.state.extreme_quantile,
        )
        return True

    def run(self, stream: np.ndarray) -> SpotResult:
        """Flag stream scores above the evolving threshold, one point at a time"""
        if self.state is None:
            raise RuntimeError("call initialize before run")
        stream = np.asarray(stream, dtype=float)
        flags = np.zeros(stream.size, dtype=int)
        thresholds = np.empty(stream.size)
        state = self.state
        for i, value in enumerate(stream):
            z_q = state.extreme_quantile
            thresholds[i] = z_q
            if value > z_q:
                flags[i] = 1
                continue
            state.observed += 1
            if value > state.init_threshold:
                state.peaks = np.append(state.peaks, value - state.init_threshold)
                self._refit()
        return SpotResult(flags=flags, thresholds=thresholds)


def spot_threshold(
    calibration: np.ndarray,
    stream: np.ndarray,
    q: float = 1e-4,
    level: float = 0.98,
    fit: GPDFit | str = GPDFit.GRIMSHAW,
) -> SpotResult:
    """
    Run SPOT on ``stream`` after calibrating on ``calibration``

    With fewer than 10 calibration peaks a warning is emitted and the stream is
    thresholded by ratio with ``sigma = 1`` instead.
    """
    detector = Spot(q=q, level=level, fit=fit)
    if not detector.initialize(calibration):
        logger.warning(
            "Only %s calibration peaks above %s, "
            "falling back to ratio thresholding with sigma=%s",
            detector.state.num_peaks,
            detector.state.init_threshold,
            FALLBACK_SIGMA,
        )
        threshold, flags = threshold_by_ratio(stream, FALLBACK_SIGMA)
        return SpotResult(
            flags=flags, thresholds=np.full(np.size(stream), threshold), fallback=True
        )
    return detector.run(stream)
