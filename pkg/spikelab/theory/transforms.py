"""
Cauchy and T transforms of spectral measures, their edge limits and
monotone inverses.

    G(z) = int dmu(t) / (z - t)
    T(z) = int t dmu(t) / (z - t) = z G(z) - 1

On every real interval free of the support both are strictly decreasing.
Semicircle and Marchenko-Pastur laws use closed forms written without
cancellation; every other measure goes through the edge-aware quadrature
of ``spikelab.theory.measure``.
"""

import cmath
import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from scipy.optimize import root_scalar

from spikelab.errors import DomainError, NumericalFailureError, OutOfRangeError
from spikelab.logger import theory_logger
from spikelab.theory.measure import (
    MarchenkoPasturMeasure,
    SemicircleMeasure,
    SpectralMeasure,
)

INF = math.inf


class Transform(StrEnum):
    G = "G"
    T = "T"


class Side(StrEnum):
    ABOVE_B = "above_b"
    BELOW_A = "below_a"
    GAP = "gap"


@dataclass(frozen=True)
class EdgeClassification:
    threshold_finite: bool
    derivative_infinite: bool


def classify_edge(alpha: float) -> EdgeClassification:
    """
    Behaviour of the transforms at an edge where the density ~ d^alpha.

    Raises:
        DomainError: alpha <= -1 (not integrable)
    """
    if not alpha > -1.0:
        raise DomainError(f"edge exponent {alpha} must exceed -1")
    return EdgeClassification(
        threshold_finite=alpha > 0.0, derivative_infinite=alpha <= 1.0
    )


@dataclass(frozen=True)
class TransformProfile:
    """
    Edge limits of G and T in the extended reals.

    ``a``/``b`` bound the support; ``t_a``/``t_b`` bound the support of
    t dmu(t). The T entries are None when the support reaches below 0.
    """

    a: float
    b: float
    g_at_a_minus: float
    g_at_b_plus: float
    g_prime_at_a_minus: float
    g_prime_at_b_plus: float
    t_a: float | None = None
    t_b: float | None = None
    t_at_a_minus: float | None = None
    t_at_b_plus: float | None = None
    t_prime_at_a_minus: float | None = None
    t_prime_at_b_plus: float | None = None

    def edges(self, which: Transform) -> tuple[float, float]:
        if which == Transform.G:
            return self.a, self.b
        if self.t_a is None:
            raise DomainError("T-transform needs a non-negative support")
        return self.t_a, self.t_b

    def value(self, which: Transform, side: Side) -> float:
        """Transform limit at the edge bounding ``side``."""
        self.edges(which)
        upper = side == Side.ABOVE_B
        match which, upper:
            case Transform.G, True:
                return self.g_at_b_plus
            case Transform.G, False:
                return self.g_at_a_minus
            case Transform.T, True:
                return self.t_at_b_plus
            case _:
                return self.t_at_a_minus

    def derivative(self, which: Transform, side: Side) -> float:
        self.edges(which)
        upper = side == Side.ABOVE_B
        match which, upper:
            case Transform.G, True:
                return self.g_prime_at_b_plus
            case Transform.G, False:
                return self.g_prime_at_a_minus
            case Transform.T, True:
                return self.t_prime_at_b_plus
            case _:
                return self.t_prime_at_a_minus


# ==================== evaluation ====================


def _point(z) -> tuple[complex, bool]:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"z={z!r} is not finite")
    return z, z.imag == 0.0


def _check_order(order: int):
    if order not in (0, 1):
        raise DomainError(f"order must be 0 or 1, got {order}")


def _require_nonnegative(measure: SpectralMeasure):
    if measure.support_bounds()[0] < 0.0:
        raise DomainError("T-transform needs a non-negative support")


def _in_t_support(measure: SpectralMeasure, x: float) -> bool:
    if x == 0.0:
        # the atom at zero carries no T mass
        part = measure.continuous
        return part is not None and part.lo <= 0.0 <= part.hi
    return measure.in_support(x)


def _quadrature(
    measure: SpectralMeasure, z: complex, real: bool, power: int, t_weight
):
    """int t^{t_weight} / (z - t)^power dmu(t), distances kept exact."""
    lo, hi = measure.reference_edges()
    x = z.real
    if real and x >= hi:
        gap = x - hi

        def diff(t, dl, dh):
            return gap + dh

    elif real and x <= lo:
        gap = lo - x

        def diff(t, dl, dh):
            return -(gap + dl)

    else:
        zz = x if real else z

        def diff(t, dl, dh):
            return zz - t

    def fun(t, dl, dh):
        with np.errstate(divide="ignore", invalid="ignore"):
            val = diff(t, dl, dh) ** (-power)
            if t_weight:
                val = np.where(t == 0.0, 0.0, t * val)
        return val

    return measure.integrate(fun)


def _semicircle(sigma: float, z: complex, order: int) -> complex:
    s = cmath.sqrt(z - 2 * sigma) * cmath.sqrt(z + 2 * sigma)
    g = 2.0 / (z + s)
    return g if order == 0 else -g / s


def _mp_g(c: float, z: complex, order: int) -> complex:
    a, b = MarchenkoPasturMeasure(c).edges
    s = cmath.sqrt(z - a) * cmath.sqrt(z - b)
    plus = z + c - 1 + s
    minus = z + c - 1 - s
    g = 2.0 / plus if abs(plus) >= abs(minus) else minus / (2 * c * z)
    return g if order == 0 else g * (c * g - 1) / s


def _mp_t(c: float, z: complex, order: int) -> complex:
    a, b = MarchenkoPasturMeasure(c).edges
    s = cmath.sqrt(z - a) * cmath.sqrt(z - b)
    denom = z - c - 1 + s
    if order == 0:
        return 2.0 / denom
    ds = (2 * z - a - b) / (2 * s)
    return -2.0 * (1 + ds) / denom**2


def _finish(value, real: bool):
    value = complex(value)
    return value.real if real else value


def cauchy_transform(measure: SpectralMeasure, z, order: int = 0):
    """
    G(z) for order 0, G'(z) for order 1.

    Real z gives a float, complex z a complex.

    Raises:
        DomainError: z lies on the support
    """
    _check_order(order)
    z, real = _point(z)
    if real and measure.in_support(z.real):
        raise DomainError(f"z={z.real!r} lies on the support")
    match measure:
        case SemicircleMeasure(sigma=sigma):
            value = _semicircle(sigma, z, order)
        case MarchenkoPasturMeasure(ratio=c):
            value = _mp_g(c, z, order)
        case _:
            value = _quadrature(measure, z, real, order + 1, False)
            value = value if order == 0 else -value
    return _finish(value, real)


def t_transform(measure: SpectralMeasure, z, order: int = 0):
    """
    T(z) for order 0, T'(z) for order 1.

    Raises:
        DomainError: negative support, the Dirac mass at zero, or z on
            the support of t dmu(t)
    """
    _check_order(order)
    _require_nonnegative(measure)
    measure.t_support_bounds()
    z, real = _point(z)
    if real and _in_t_support(measure, z.real):
        raise DomainError(f"z={z.real!r} lies on the support")
    match measure:
        case MarchenkoPasturMeasure(ratio=c):
            value = _mp_t(c, z, order)
        case _:
            value = _quadrature(measure, z, real, order + 1, True)
            value = value if order == 0 else -value
    return _finish(value, real)


def evaluate(measure: SpectralMeasure, which: Transform, z, order: int = 0):
    if Transform(which) == Transform.G:
        return cauchy_transform(measure, z, order)
    return t_transform(measure, z, order)


# ==================== edge limits ====================


def _edge_limit(
    measure: SpectralMeasure, side: str, t_weight: bool
) -> tuple[float, float]:
    """(transform limit, derivative limit) at one edge."""
    part = measure.continuous
    locs, _ = measure.atoms()
    if t_weight:
        locs = locs[locs != 0.0]
        edge = measure.t_support_bounds()[side == "hi"]
    else:
        edge = measure.support_bounds()[side == "hi"]
    sign = 1.0 if side == "hi" else -1.0
    part_edge = None
    if part is not None:
        part_edge = part.hi if side == "hi" else part.lo
    if edge != part_edge or np.any(locs == edge):
        return sign * INF, -INF

    alpha = part.alpha_hi if side == "hi" else part.alpha_lo
    # t vanishes at a lower edge sitting at zero
    bonus = 1.0 if t_weight and side == "lo" and part.lo == 0.0 else 0.0
    kind = classify_edge(alpha + bonus)

    def limit(power: int) -> float:
        def fun(t, dl, dh):
            dist = dh if side == "hi" else dl
            with np.errstate(divide="ignore", invalid="ignore"):
                val = dist ** (-power)
                if t_weight:
                    num = dl if bonus else t
                    val = np.where(t == 0.0, 0.0, num * val)
            return val

        shift = (-power + bonus, 0.0) if side == "lo" else (0.0, -power)
        return float(measure.integrate(fun, shift))

    value = sign * limit(1) if kind.threshold_finite else sign * INF
    deriv = -INF if kind.derivative_infinite else -limit(2)
    return value, deriv


def _closed_form_profile(measure: SpectralMeasure) -> TransformProfile | None:
    match measure:
        case SemicircleMeasure(sigma=sigma):
            return TransformProfile(
                a=-2 * sigma,
                b=2 * sigma,
                g_at_a_minus=-1 / sigma,
                g_at_b_plus=1 / sigma,
                g_prime_at_a_minus=-INF,
                g_prime_at_b_plus=-INF,
            )
        case MarchenkoPasturMeasure(ratio=c):
            root = math.sqrt(c)
            a, b = measure.edges
            return TransformProfile(
                a=0.0 if c > 1 else a,
                b=b,
                g_at_a_minus=(1 / (root * (root - 1)) if c < 1 else -INF),
                g_at_b_plus=1 / (root * (1 + root)),
                g_prime_at_a_minus=-INF,
                g_prime_at_b_plus=-INF,
                t_a=a,
                t_b=b,
                t_at_a_minus=-1 / root,
                t_at_b_plus=1 / root,
                t_prime_at_a_minus=-INF,
                t_prime_at_b_plus=-INF,
            )
    return None


def _build_profile(measure: SpectralMeasure) -> TransformProfile:
    profile = _closed_form_profile(measure)
    if profile is not None:
        return profile
    a, b = measure.support_bounds()
    g_a, gp_a = _edge_limit(measure, "lo", False)
    g_b, gp_b = _edge_limit(measure, "hi", False)
    fields = {}
    if a >= 0.0 and not (a == b == 0.0):
        t_a, t_b = measure.t_support_bounds()
        t_lo, tp_lo = _edge_limit(measure, "lo", True)
        t_hi, tp_hi = _edge_limit(measure, "hi", True)
        fields = {
            "t_a": t_a,
            "t_b": t_b,
            "t_at_a_minus": t_lo,
            "t_at_b_plus": t_hi,
            "t_prime_at_a_minus": tp_lo,
            "t_prime_at_b_plus": tp_hi,
        }
    profile = TransformProfile(a, b, g_a, g_b, gp_a, gp_b, **fields)
    theory_logger.debug("edge profile of %s: %s", measure.kind, profile)
    return profile


def edge_limits(measure: SpectralMeasure) -> TransformProfile:
    """Edge limits of G and T, computed once per measure."""
    return measure.cached("profile", lambda: _build_profile(measure))


# ==================== inversion ====================


def _solve(fun, lo: float, hi: float) -> float:
    try:
        sol = root_scalar(fun, bracket=(lo, hi), method="brentq", xtol=1e-15)
    except ValueError as e:
        raise NumericalFailureError(f"root bracketing failed: {e}") from e
    if not sol.converged:
        raise NumericalFailureError(f"brentq stopped: {sol.flag}")
    return sol.root


def _outer_branch(measure, which, w, profile, upper: bool) -> float:
    a, b = profile.edges(which)
    edge = b if upper else a
    direction = 1.0 if upper else -1.0

    def f(z):
        return evaluate(measure, which, z) - w

    # f > 0 next to b, < 0 far above it; mirrored below a
    def near(z):
        return f(z) > 0 if upper else f(z) < 0

    offset = 1e-9 * (b - a + 1.0)
    inner = edge + direction * offset
    while not near(inner):
        offset *= 0.5
        closer = edge + direction * offset
        if closer == edge:
            return inner
        inner = closer
    outer_offset = 2 * offset
    for _ in range(2000):
        outer = edge + direction * outer_offset
        if not near(outer):
            break
        inner = outer
        outer_offset *= 2.0
    else:
        raise NumericalFailureError(
            f"could not bracket {which}^-1({w!r}) beyond {edge!r}"
        )
    theory_logger.debug(
        "bracket for %s^-1(%g): [%g, %g]", which, w, inner, outer
    )
    lo, hi = sorted((inner, outer))
    return _solve(f, lo, hi)


def gap_image(
    measure: SpectralMeasure, which: Transform, gap: tuple[float, float]
) -> tuple[float, float]:
    """Image (F(d-), F(c+)) of the branch on the hole (c, d)."""
    c, d = _check_gap(measure, which, gap)
    return _gap_end(measure, which, c, d, upper=True), _gap_end(
        measure, which, c, d, upper=False
    )


def _check_gap(measure, which, gap) -> tuple[float, float]:
    c, d = map(float, gap)
    if not c < d:
        raise DomainError(f"gap ({c}, {d}) is empty")
    if which == Transform.T:
        _require_nonnegative(measure)
    if measure.meets_interval(c, d):
        raise DomainError(f"gap ({c}, {d}) intersects the support")
    return c, d


def _gap_end(measure, which, c, d, upper: bool) -> float:
    """F(d-) when ``upper``, else F(c+); infinite when the end is a pole."""
    end = d if upper else c
    on_support = (
        _in_t_support(measure, end)
        if which == Transform.T
        else measure.in_support(end)
    )
    if not on_support:
        return evaluate(measure, which, end)
    prof = edge_limits(measure)
    if which == Transform.G and upper and end == prof.a:
        return prof.g_at_a_minus
    if which == Transform.G and not upper and end == prof.b:
        return prof.g_at_b_plus
    return -INF if upper else INF


def _gap_branch(measure, which, w, gap) -> float:
    c, d = _check_gap(measure, which, gap)

    def f(z):
        return evaluate(measure, which, z) - w

    def approach(end, toward):
        on_support = (
            _in_t_support(measure, end)
            if which == Transform.T
            else measure.in_support(end)
        )
        if not on_support:
            return end
        step = 0.5 * (toward - end)
        point = end + step
        for _ in range(1100):
            if (f(point) > 0) == (toward > end):
                return point
            step *= 0.5
            if end + step == end:
                break
            point = end + step
        raise OutOfRangeError(w, gap_image(measure, which, (c, d)), which)

    lo, hi = approach(c, d), approach(d, c)
    if not (f(lo) > 0 > f(hi)):
        raise OutOfRangeError(w, gap_image(measure, which, (c, d)), which)
    return _solve(f, lo, hi)


def invert_transform(
    measure: SpectralMeasure,
    w: float,
    which: Transform | str = Transform.G,
    side: Side | str = Side.ABOVE_B,
    gap: tuple[float, float] | None = None,
) -> float:
    """
    The unique z on a monotone branch with G(z) = w (or T(z) = w).

    Args:
        measure: the spectral measure
        w: target value, strictly inside the branch image
        which: "G" or "T"
        side: "above_b" for (b, inf), "below_a" for (-inf, a), "gap" for
            a hole (c, d) of the support given in ``gap``

    Returns:
        z with |F(z) - w| < 1e-10

    Raises:
        OutOfRangeError: w is outside the branch image
        DomainError: bad gap, or T requested on a negative support

    Example:
        >>> round(invert_transform(SemicircleMeasure(1.0), 0.5), 12)
        2.5
    """
    which, side = Transform(which), Side(side)
    w = float(w)
    if side == Side.GAP:
        if gap is None:
            raise DomainError("side 'gap' needs the gap (c, d)")
        return _gap_branch(measure, which, w, gap)
    if which == Transform.T:
        _require_nonnegative(measure)
    profile = edge_limits(measure)
    limit = profile.value(which, side)
    upper = side == Side.ABOVE_B
    image = (0.0, limit) if upper else (limit, 0.0)
    if not image[0] < w < image[1]:
        raise OutOfRangeError(w, image, which)
    return _outer_branch(measure, which, w, profile, upper)


def r_transform(measure: SpectralMeasure, w: float) -> float:
    """R(w) = G^{-1}(w) - 1/w on the outer branch matching sign(w)."""
    if w == 0:
        raise DomainError("R-transform is evaluated at w != 0")
    side = Side.ABOVE_B if w > 0 else Side.BELOW_A
    return invert_transform(measure, w, Transform.G, side) - 1.0 / w


def s_transform(measure: SpectralMeasure, w: float) -> float:
    """S(w) = (1 + w) / (w T^{-1}(w))."""
    if w == 0:
        raise DomainError("S-transform is evaluated at w != 0")
    side = Side.ABOVE_B if w > 0 else Side.BELOW_A
    return (1.0 + w) / (w * invert_transform(measure, w, Transform.T, side))
