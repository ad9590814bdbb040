"""
Asymptotic spike predictions from a limiting spectral measure.

For an additive perturbation X + P the top outlier sits at G^{-1}(1/theta)
once theta > 1/G(b+), and its squared overlap with the spike direction is
-1 / (theta^2 G'(rho)). The multiplicative model X (I + P) replaces G by
T, with overlap -1 / (theta^2 rho T'(rho) + theta). The similarity form
(I + P)^{1/2} X (I + P)^{1/2} shares the eigenvalues of X (I + P); its
overlap is a rational function of the raw one.
"""

import math
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np

from spikelab.errors import DomainError, OutOfRangeError
from spikelab.logger import theory_logger
from spikelab.theory.measure import SpectralMeasure
from spikelab.theory.transforms import (
    Side,
    Transform,
    TransformProfile,
    cauchy_transform,
    edge_limits,
    invert_transform,
    t_transform,
)


class Model(StrEnum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"
    SIMILARITY = "similarity"

    @property
    def transform(self) -> Transform:
        return Transform.G if self == Model.ADDITIVE else Transform.T


class OverlapVariant(StrEnum):
    RAW = "raw"
    SIMILARITY = "similarity"


@dataclass(frozen=True)
class SpikeSpec:
    """Nonzero spike values theta_1 >= ... >= theta_r."""

    thetas: tuple[float, ...]

    def __post_init__(self):
        thetas = tuple(float(t) for t in self.thetas)
        if not thetas:
            raise DomainError("at least one spike is required")
        if any(t == 0.0 or not math.isfinite(t) for t in thetas):
            raise DomainError(f"spikes must be finite and nonzero: {thetas}")
        if any(a < b for a, b in zip(thetas, thetas[1:])):
            raise DomainError(f"spikes must be descending: {thetas}")
        object.__setattr__(self, "thetas", thetas)

    @classmethod
    def of(cls, thetas: Iterable[float]) -> "SpikeSpec":
        """Build a spec from unsorted values."""
        return cls(tuple(sorted((float(t) for t in thetas), reverse=True)))

    @property
    def r(self) -> int:
        return len(self.thetas)

    @property
    def s(self) -> int:
        return sum(t > 0 for t in self.thetas)

    def multiplicity(self, theta: float) -> int:
        return self.thetas.count(theta)


@dataclass(frozen=True)
class SpikeOutcome:
    theta: float
    limit: float
    detectable: bool
    overlap_sq: float | None
    multiplicity: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "theta": self.theta,
            "limit": self.limit,
            "detectable": self.detectable,
            "overlap_sq": self.overlap_sq,
        }


@dataclass(frozen=True)
class SpikePrediction:
    model: Model
    outcomes: tuple[SpikeOutcome, ...]

    def __iter__(self) -> Iterator[SpikeOutcome]:
        return iter(self.outcomes)

    def __len__(self) -> int:
        return len(self.outcomes)

    def __getitem__(self, i: int) -> SpikeOutcome:
        return self.outcomes[i]

    def to_records(self) -> list[dict[str, Any]]:
        return [o.to_dict() for o in self.outcomes]


# ==================== branch logic ====================


def _branch(profile: TransformProfile, which: Transform, theta: float):
    """(side, edge, critical w) for the outlier that theta would create."""
    side = Side.ABOVE_B if theta > 0 else Side.BELOW_A
    a, b = profile.edges(which)
    return side, (b if theta > 0 else a), profile.value(which, side)


def _is_supercritical(theta: float, limit: float) -> bool:
    w = 1.0 / theta
    return 0.0 < w < limit if theta > 0 else limit < w < 0.0


def _locate(measure, profile, which, theta) -> tuple[float, bool]:
    side, edge, limit = _branch(profile, which, theta)
    if not _is_supercritical(theta, limit):
        return edge, False
    return invert_transform(measure, 1.0 / theta, which, side), True


def _subcritical_overlap(profile, which, theta) -> float | None:
    side, _, limit = _branch(profile, which, theta)
    if 1.0 / theta == limit:
        return None
    return 0.0 if profile.derivative(which, side) == -math.inf else None


def _unit(value: float) -> float:
    return float(np.clip(value, 0.0, 1.0))


def _check_multiplicative(measure: SpectralMeasure, theta: float):
    if measure.support_bounds()[0] < 0.0:
        raise DomainError("multiplicative model needs a non-negative X")
    if theta <= -1.0:
        raise DomainError(
            f"theta={theta} makes I + P singular or indefinite"
        )


# ==================== additive ====================


def predict_additive_overlap(
    measure: SpectralMeasure, theta: float
) -> float | None:
    """
    Limit of |<u, u~>|^2 for the additive spike ``theta``.

    Returns None when the limit is not determined by the measure: at the
    exact threshold, or below it when G' stays finite at the edge.
    """
    theta = float(theta)
    profile = edge_limits(measure)
    rho, detectable = _locate(measure, profile, Transform.G, theta)
    if not detectable:
        return _subcritical_overlap(profile, Transform.G, theta)
    g_prime = cauchy_transform(measure, rho, order=1)
    return _unit(-1.0 / (theta**2 * g_prime))


def predict_additive(
    measure: SpectralMeasure, spikes: SpikeSpec
) -> SpikePrediction:
    """
    Outlier limits and overlaps of X + U diag(theta) U*.

    Example:
        >>> predict_additive(SemicircleMeasure(1.0), SpikeSpec((2.0,)))[0]
        SpikeOutcome(theta=2.0, limit=2.5, detectable=True, ...)
    """
    profile = edge_limits(measure)
    outcomes = {}
    for theta in dict.fromkeys(spikes.thetas):
        limit, detectable = _locate(measure, profile, Transform.G, theta)
        outcomes[theta] = SpikeOutcome(
            theta,
            limit,
            detectable,
            predict_additive_overlap(measure, theta),
            spikes.multiplicity(theta),
        )
    theory_logger.debug("additive prediction: %s", outcomes)
    return SpikePrediction(
        Model.ADDITIVE, tuple(outcomes[t] for t in spikes.thetas)
    )


# ==================== multiplicative ====================


def similarity_overlap(raw: float, theta: float) -> float:
    """Overlap in (I+P)^{1/2} X (I+P)^{1/2} from the X (I+P) overlap."""
    return (theta + 1.0) * raw / (theta * raw + 1.0)


def predict_multiplicative_overlap(
    measure: SpectralMeasure,
    theta: float,
    variant: OverlapVariant | str = OverlapVariant.RAW,
) -> float | None:
    theta = float(theta)
    variant = OverlapVariant(variant)
    _check_multiplicative(measure, theta)
    profile = edge_limits(measure)
    rho, detectable = _locate(measure, profile, Transform.T, theta)
    if not detectable:
        return _subcritical_overlap(profile, Transform.T, theta)
    t_prime = t_transform(measure, rho, order=1)
    raw = _unit(-1.0 / (theta**2 * rho * t_prime + theta))
    if variant == OverlapVariant.SIMILARITY:
        return _unit(similarity_overlap(raw, theta))
    return raw


def predict_multiplicative(
    measure: SpectralMeasure,
    spikes: SpikeSpec,
    variant: OverlapVariant | str = OverlapVariant.RAW,
) -> SpikePrediction:
    """
    Outlier limits and overlaps of X (I + P), or of its similarity form.

    Raises:
        DomainError: X has negative support, or some theta <= -1
    """
    variant = OverlapVariant(variant)
    for theta in spikes.thetas:
        _check_multiplicative(measure, theta)
    profile = edge_limits(measure)
    outcomes = {}
    for theta in dict.fromkeys(spikes.thetas):
        limit, detectable = _locate(measure, profile, Transform.T, theta)
        outcomes[theta] = SpikeOutcome(
            theta,
            limit,
            detectable,
            predict_multiplicative_overlap(measure, theta, variant),
            spikes.multiplicity(theta),
        )
    model = (
        Model.SIMILARITY
        if variant == OverlapVariant.SIMILARITY
        else Model.MULTIPLICATIVE
    )
    return SpikePrediction(model, tuple(outcomes[t] for t in spikes.thetas))


def predict(
    measure: SpectralMeasure, spikes: SpikeSpec, model: Model | str
) -> SpikePrediction:
    match Model(model):
        case Model.ADDITIVE:
            return predict_additive(measure, spikes)
        case Model.MULTIPLICATIVE:
            return predict_multiplicative(measure, spikes)
        case Model.SIMILARITY:
            return predict_multiplicative(
                measure, spikes, OverlapVariant.SIMILARITY
            )


# ==================== holes and thresholds ====================


def predict_in_gap(
    measure: SpectralMeasure,
    gap: tuple[float, float],
    spikes: SpikeSpec,
    which: Transform | str = Transform.G,
) -> list[tuple[float, float]]:
    """
    Outliers created inside a hole (c, d) of the support.

    Spikes whose 1/theta falls outside the image of the branch on (c, d)
    are left out.

    Raises:
        DomainError: (c, d) meets the support
    """
    found = []
    for theta in spikes.thetas:
        try:
            z = invert_transform(measure, 1.0 / theta, which, Side.GAP, gap)
        except OutOfRangeError:
            theory_logger.debug("theta=%g has no outlier in %s", theta, gap)
            continue
        found.append((theta, z))
    return found


def critical_threshold(
    measure: SpectralMeasure,
    which: Transform | str = Transform.G,
    side: Side | str = Side.ABOVE_B,
) -> float:
    """1/F(b+) (or 1/F(a-)); 0 when the edge limit is infinite."""
    limit = edge_limits(measure).value(Transform(which), Side(side))
    return 0.0 if math.isinf(limit) else 1.0 / limit
