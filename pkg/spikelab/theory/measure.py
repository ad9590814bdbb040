"""
Compactly supported spectral measures on the real line.

Every measure is split into a finite set of atoms and at most one
continuous part living on [lo, hi]. The continuous density is stored as

    f(t) = h(t) * (t - lo)^alpha_lo * (hi - t)^alpha_hi

with a regular factor h and explicit edge exponents. Integrals against
the density are computed by adaptive Gauss-Legendre quadrature after
the substitution d = u^(1/(1+beta)) on each half of the support, which
absorbs a power-law edge behaviour d^beta of the whole integrand.

Measures are immutable; the only mutable state is a private cache
(CDF grid, transform profile) filled under a lock.
"""

import json
import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from threading import RLock
from typing import Any

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from spikelab.errors import ConfigError, DomainError, NumericalFailureError
from spikelab.logger import theory_logger
from spikelab.utils import SPIKE_CACHE_GRID, json_key_line, read_json

MASS_TOL = 1e-10
MAX_MOMENT = 8
SUPPORT_TOL = 1e-12

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_CACHE_LOCK = RLock()

# fun(t, d_lo, d_hi): integrand with distances to the continuous edges
EdgeAwareIntegrand = Callable[[np.ndarray, np.ndarray, np.ndarray], Any]


class MeasureKind(StrEnum):
    ATOMIC = "atomic"
    SMOOTH_DENSITY = "density"
    SEMICIRCLE = "semicircle"
    MARCHENKO_PASTUR = "marchenko_pastur"


# ==================== quadrature ====================


def _gauss_legendre(fun: Callable, lo: float, hi: float):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return half * np.sum(_GL_W * fun(mid + half * _GL_X))


def adaptive_gauss_legendre(
    fun: Callable,
    lo: float,
    hi: float,
    rel_tol: float = 1e-13,
    abs_tol: float = 1e-15,
    max_panels: int = 20_000,
):
    """
    Integrate a vectorised function over [lo, hi].

    Each panel compares the 24-point rule on the panel with the sum of the
    rules on its two halves and is split until they agree.

    Raises:
        NumericalFailureError: more than ``max_panels`` panels were needed.
    """
    if hi <= lo:
        return 0.0
    width = hi - lo
    total = 0.0
    panels = 0
    stack = [(lo, hi, _gauss_legendre(fun, lo, hi))]
    while stack:
        a, b, coarse = stack.pop()
        m = 0.5 * (a + b)
        left = _gauss_legendre(fun, a, m)
        right = _gauss_legendre(fun, m, b)
        fine = left + right
        panels += 1
        err = abs(fine - coarse)
        if (
            err <= max(abs_tol * (b - a) / width, rel_tol * abs(fine))
            or not a < m < b
        ):
            total += fine
            continue
        if panels > max_panels:
            raise NumericalFailureError(
                f"quadrature on [{lo!r}, {hi!r}] did not converge "
                f"after {max_panels} panels (last error {err:.3e})"
            )
        stack.append((a, m, left))
        stack.append((m, b, right))
    theory_logger.debug("quadrature on [%g, %g]: %d panels", lo, hi, panels)
    return total


# ==================== continuous part ====================


@dataclass(frozen=True)
class DensityPart:
    """
    Continuous component f(t) = h(t) (t-lo)^alpha_lo (hi-t)^alpha_hi.

    Args:
        lo, hi: support of the density
        alpha_lo, alpha_hi: edge exponents, both > -1
        regular: the regular factor h, vectorised
    """

    lo: float
    hi: float
    alpha_lo: float
    alpha_hi: float
    regular: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise DomainError("density support must be bounded")
        if not self.lo < self.hi:
            raise DomainError(
                f"density support [{self.lo}, {self.hi}] is empty"
            )
        for alpha in (self.alpha_lo, self.alpha_hi):
            if not alpha > -1.0:
                raise DomainError(f"edge exponent {alpha} must exceed -1")

    def pdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = (t > self.lo) & (t < self.hi)
        out = np.zeros_like(t)
        ti = t[inside]
        out[inside] = (
            self.regular(ti)
            * (ti - self.lo) ** self.alpha_lo
            * (self.hi - ti) ** self.alpha_hi
        )
        return out

    def _weighted(self, t, d_lo, d_hi):
        return self.regular(t) * d_lo**self.alpha_lo * d_hi**self.alpha_hi

    def edge_segment(
        self,
        fun: EdgeAwareIntegrand,
        side: str,
        length: float,
        shift: float = 0.0,
    ):
        """
        Integral of fun * f over the segment of ``length`` touching an edge.

        ``shift`` is the power of the distance to that edge carried by
        ``fun`` itself (e.g. -1 for 1/(hi - t)).
        """
        alpha = self.alpha_lo if side == "lo" else self.alpha_hi
        beta = alpha + shift
        if not beta > -1.0:
            raise DomainError(
                f"integrand decays like d^{beta:g} at the {side} edge"
            )
        p = 1.0 / (1.0 + beta)
        span = self.hi - self.lo

        def mapped(u):
            d = u**p
            jac = p * u ** (p - 1.0)
            if side == "lo":
                t, d_lo, d_hi = self.lo + d, d, span - d
            else:
                t, d_lo, d_hi = self.hi - d, span - d, d
            return fun(t, d_lo, d_hi) * self._weighted(t, d_lo, d_hi) * jac

        return adaptive_gauss_legendre(mapped, 0.0, length ** (1.0 + beta))

    def integrate(
        self,
        fun: EdgeAwareIntegrand,
        shift: tuple[float, float] = (0.0, 0.0),
    ):
        half = 0.5 * (self.hi - self.lo)
        return self.edge_segment(
            fun, "lo", half, shift[0]
        ) + self.edge_segment(fun, "hi", half, shift[1])

    def mass(self) -> float:
        return float(self.integrate(_one))

    def cumulative_grid(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Cumulative mass on a uniform grid of ``size`` points."""
        grid = np.linspace(self.lo, self.hi, size)
        h = grid[1] - grid[0]
        cells = np.empty(size - 1)
        cells[0] = self.edge_segment(_one, "lo", h)
        cells[-1] = self.edge_segment(_one, "hi", h)
        if size > 3:
            mids = 0.5 * (grid[1:-2] + grid[2:-1])
            nodes = mids[:, None] + 0.5 * h * _GL_X[None, :]
            cells[1:-1] = 0.5 * h * (self.pdf(nodes) @ _GL_W)
        return grid, np.concatenate([[0.0], np.cumsum(cells)])


def _one(t, d_lo=None, d_hi=None):
    return np.ones_like(t)


# ==================== measures ====================


@dataclass(frozen=True)
class SpectralMeasure(ABC):
    """A compactly supported probability measure on the real line."""

    _cache: dict = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    @property
    @abstractmethod
    def kind(self) -> MeasureKind: ...

    @property
    @abstractmethod
    def continuous(self) -> DensityPart | None: ...

    @abstractmethod
    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Atom locations (ascending) and their weights."""

    def cached(self, key: str, build: Callable[[], Any]) -> Any:
        """Compute ``build()`` once per measure, thread-safely."""
        try:
            return self._cache[key]
        except KeyError:
            pass
        with _CACHE_LOCK:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    # ---------- support ----------

    def support_bounds(self) -> tuple[float, float]:
        """Convex hull of the support, atom at zero included."""
        locs, _ = self.atoms()
        ends = list(locs)
        if self.continuous is not None:
            ends += [self.continuous.lo, self.continuous.hi]
        return float(min(ends)), float(max(ends))

    def t_support_bounds(self) -> tuple[float, float]:
        """
        Hull of the support of t dmu(t), i.e. without an atom at zero.

        Raises:
            DomainError: the measure is the Dirac mass at zero.
        """
        locs, _ = self.atoms()
        ends = [x for x in locs if x != 0.0]
        if self.continuous is not None:
            ends += [self.continuous.lo, self.continuous.hi]
        if not ends:
            raise DomainError("the Dirac mass at zero has no T-transform")
        return float(min(ends)), float(max(ends))

    def in_support(self, x: float, tol: float = SUPPORT_TOL) -> bool:
        locs, _ = self.atoms()
        if locs.size and np.min(np.abs(locs - x)) < tol:
            return True
        part = self.continuous
        return part is not None and part.lo <= x <= part.hi

    def meets_interval(self, lo: float, hi: float) -> bool:
        """Whether the open interval (lo, hi) intersects the support."""
        locs, _ = self.atoms()
        if np.any((locs > lo) & (locs < hi)):
            return True
        part = self.continuous
        return part is not None and part.lo < hi and part.hi > lo

    # ---------- integration ----------

    def reference_edges(self) -> tuple[float, float]:
        """Edges that ``integrate`` measures its distances from."""
        part = self.continuous
        if part is not None:
            return part.lo, part.hi
        return self.support_bounds()

    def integrate(
        self,
        fun: EdgeAwareIntegrand,
        shift: tuple[float, float] = (0.0, 0.0),
    ):
        """
        Integral of ``fun`` against the measure.

        ``fun`` is called as fun(t, d_lo, d_hi) where d_lo = t - lo and
        d_hi = hi - t measure the distance to ``reference_edges()``; near
        an edge the small distance is exact, not the difference of two
        rounded numbers. ``shift`` declares extra edge powers carried by
        ``fun``.
        """
        locs, weights = self.atoms()
        part = self.continuous
        lo, hi = self.reference_edges()
        total = 0.0
        if locs.size:
            total = np.sum(weights * fun(locs, locs - lo, hi - locs))
        if part is not None:
            total = total + part.integrate(fun, shift)
        return total

    def total_mass(self) -> float:
        return float(self.integrate(_one))

    def moment(self, k: int) -> float:
        """
        k-th moment of the measure.

        Raises:
            DomainError: k outside 0..8
            NumericalFailureError: quadrature did not converge
        """
        if not 0 <= k <= MAX_MOMENT:
            raise DomainError(f"moment order {k} outside 0..{MAX_MOMENT}")
        if k == 0:
            return float(self.total_mass())
        return float(self.integrate(lambda t, dl, dh: t**k))

    def pdf(self, t) -> np.ndarray:
        part = self.continuous
        t = np.asarray(t, dtype=float)
        return np.zeros_like(t) if part is None else part.pdf(t)

    # ---------- distribution function ----------

    def _cdf_interpolant(self) -> PchipInterpolator | None:
        part = self.continuous
        if part is None:
            return None

        def build():
            grid, cum = part.cumulative_grid(SPIKE_CACHE_GRID)
            return PchipInterpolator(grid, cum, extrapolate=False)

        return self.cached("cdf", build)

    def cdf(self, x, left: bool = False) -> np.ndarray:
        """F(x) = mu((-inf, x]); with ``left`` the limit F(x-)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        locs, weights = self.atoms()
        if locs.size:
            cum = np.concatenate([[0.0], np.cumsum(weights)])
            side = "left" if left else "right"
            out += cum[np.searchsorted(locs, x, side=side)]
        interp = self._cdf_interpolant()
        if interp is not None:
            part = self.continuous
            mass = float(interp(part.hi))
            inner = np.clip(x, part.lo, part.hi)
            vals = np.nan_to_num(interp(inner), nan=0.0)
            out += np.where(x >= part.hi, mass, np.clip(vals, 0.0, mass))
        return np.clip(out, 0.0, 1.0)

    def quantiles(self, n: int) -> np.ndarray:
        """Mid-quantiles F^{-1}((k - 1/2)/n), k = 1..n, ascending."""
        if n < 1:
            raise DomainError("need at least one quantile")
        q = (np.arange(1, n + 1) - 0.5) / n
        lo, hi = self.support_bounds()
        left = np.full(n, lo, dtype=float)
        right = np.full(n, hi, dtype=float)
        for _ in range(64):
            mid = 0.5 * (left + right)
            above = self.cdf(mid) >= q
            right = np.where(above, mid, right)
            left = np.where(above, left, mid)
        return right


@dataclass(frozen=True)
class AtomicMeasure(SpectralMeasure):
    """Finite sum of point masses; equal locations are merged."""

    locations: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if locs.ndim != 1 or locs.shape != weights.shape or not locs.size:
            raise DomainError("atoms and weights must be equal-length lists")
        if not np.all(np.isfinite(locs)):
            raise DomainError("atom locations must be finite")
        if np.any(weights < 0):
            raise DomainError("atom weights must be non-negative")
        if abs(weights.sum() - 1.0) > MASS_TOL:
            raise DomainError(f"atom weights sum to {weights.sum()!r}")
        uniq, inverse = np.unique(locs, return_inverse=True)
        merged = np.bincount(inverse, weights=weights)
        keep = merged > 0
        object.__setattr__(self, "locations", tuple(uniq[keep].tolist()))
        object.__setattr__(self, "weights", tuple(merged[keep].tolist()))

    @property
    def kind(self) -> MeasureKind:
        return MeasureKind.ATOMIC

    @property
    def continuous(self) -> None:
        return None

    def atoms(self):
        return np.asarray(self.locations), np.asarray(self.weights)


@dataclass(frozen=True)
class DensityMeasure(SpectralMeasure):
    """
    Smooth density on [support_lo, support_hi] plus an optional atom at 0.

    ``density`` is the full density f (not the regular factor); it must
    integrate to 1 - atom_at_zero_weight.
    """

    support_lo: float
    support_hi: float
    density: Callable[[np.ndarray], np.ndarray]
    edge_exponent_lo: float
    edge_exponent_hi: float
    atom_at_zero_weight: float = 0.0
    regular: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self):
        if not 0.0 <= self.atom_at_zero_weight < 1.0:
            raise DomainError("atom at zero must have weight in [0, 1)")
        part = self.continuous
        mass = part.mass()
        expected = 1.0 - self.atom_at_zero_weight
        if abs(mass - expected) > MASS_TOL:
            raise DomainError(
                f"density integrates to {mass!r}, expected {expected!r}"
            )

    @classmethod
    def from_grid(
        cls,
        support: tuple[float, float],
        samples: Sequence[float],
        edge_exponents: tuple[float, float],
        atom_at_zero_weight: float = 0.0,
    ) -> "DensityMeasure":
        """
        Density given by samples on a uniform grid over the support.

        The samples are divided by the edge power law, the quotient is
        interpolated by a cubic spline, and the result is renormalised.
        """
        lo, hi = map(float, support)
        alpha_lo, alpha_hi = map(float, edge_exponents)
        vals = np.asarray(samples, dtype=float)
        if vals.ndim != 1 or vals.size < 6:
            raise DomainError("density grid needs at least 6 samples")
        if np.any(vals < 0) or not np.all(np.isfinite(vals[1:-1])):
            raise DomainError("density samples must be finite and >= 0")
        grid = np.linspace(lo, hi, vals.size)
        inner = grid[1:-1]
        quotient = vals[1:-1] / (
            (inner - lo) ** alpha_lo * (hi - inner) ** alpha_hi
        )
        spline = CubicSpline(inner, quotient, extrapolate=True)

        def raw(t):
            return np.maximum(spline(t), 0.0)

        probe = DensityPart(lo, hi, alpha_lo, alpha_hi, raw)
        mass = probe.mass()
        expected = 1.0 - atom_at_zero_weight
        if not mass > 0 or abs(mass - expected) > 1e-2:
            raise DomainError(
                f"grid density integrates to {mass!r}, expected {expected!r}"
            )
        if abs(mass - expected) > 1e-6:
            theory_logger.warning(
                "renormalising grid density: mass %.8f -> %.8f",
                mass,
                expected,
            )
        scale = expected / mass

        def regular(t):
            return scale * raw(t)

        def density(t):
            return DensityPart(lo, hi, alpha_lo, alpha_hi, regular).pdf(t)

        return cls(
            lo,
            hi,
            density,
            alpha_lo,
            alpha_hi,
            atom_at_zero_weight,
            regular=regular,
        )

    @property
    def kind(self) -> MeasureKind:
        return MeasureKind.SMOOTH_DENSITY

    @property
    def continuous(self) -> DensityPart:
        lo, hi = self.support_lo, self.support_hi
        a_lo, a_hi = self.edge_exponent_lo, self.edge_exponent_hi
        regular = self.regular
        if regular is None:
            dens = self.density

            def regular(t):
                return np.asarray(dens(t), dtype=float) / (
                    (t - lo) ** a_lo * (hi - t) ** a_hi
                )

        return DensityPart(lo, hi, a_lo, a_hi, regular)

    def atoms(self):
        if self.atom_at_zero_weight > 0:
            return np.array([0.0]), np.array([self.atom_at_zero_weight])
        return np.empty(0), np.empty(0)


@dataclass(frozen=True)
class SemicircleMeasure(SpectralMeasure):
    """Semicircle law of radius 2 sigma."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    @property
    def kind(self) -> MeasureKind:
        return MeasureKind.SEMICIRCLE

    @property
    def continuous(self) -> DensityPart:
        s2 = self.sigma**2
        return DensityPart(
            -2 * self.sigma,
            2 * self.sigma,
            0.5,
            0.5,
            lambda t: np.full_like(t, 1.0 / (2 * math.pi * s2)),
        )

    def atoms(self):
        return np.empty(0), np.empty(0)


@dataclass(frozen=True)
class MarchenkoPasturMeasure(SpectralMeasure):
    """Marchenko-Pastur law with ratio c = n/m (atom 1 - 1/c at 0 if c>1)."""

    ratio: float

    def __post_init__(self):
        if not self.ratio > 0:
            raise DomainError(f"ratio must be positive, got {self.ratio}")

    @property
    def edges(self) -> tuple[float, float]:
        root = math.sqrt(self.ratio)
        return (1 - root) ** 2, (1 + root) ** 2

    @property
    def zero_atom(self) -> float:
        return max(0.0, 1.0 - 1.0 / self.ratio)

    @property
    def kind(self) -> MeasureKind:
        return MeasureKind.MARCHENKO_PASTUR

    @property
    def continuous(self) -> DensityPart:
        a, b = self.edges
        c = self.ratio
        if c == 1.0:
            # sqrt((4-t) t) / (2 pi t) = (4-t)^(1/2) t^(-1/2) / (2 pi)
            return DensityPart(
                0.0,
                b,
                -0.5,
                0.5,
                lambda t: np.full_like(t, 1.0 / (2 * math.pi)),
            )
        return DensityPart(
            a, b, 0.5, 0.5, lambda t: 1.0 / (2 * math.pi * c * t)
        )

    def atoms(self):
        if self.zero_atom > 0:
            return np.array([0.0]), np.array([self.zero_atom])
        return np.empty(0), np.empty(0)


# ==================== empirical spectra ====================


@dataclass(frozen=True)
class EmpiricalSpectrum:
    """Eigenvalues of a finite matrix, in descending order."""

    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise DomainError("empirical spectrum is empty")
        if any(a < b for a, b in zip(self.values, self.values[1:])):
            raise DomainError("empirical spectrum must be descending")

    @classmethod
    def from_values(cls, values) -> "EmpiricalSpectrum":
        arr = np.sort(np.asarray(values, dtype=float).ravel())[::-1]
        return cls(tuple(arr.tolist()))

    @property
    def n(self) -> int:
        return len(self.values)


# ==================== module-level operations ====================


def support_bounds(measure: SpectralMeasure) -> tuple[float, float]:
    return measure.support_bounds()


def moment(measure: SpectralMeasure, k: int) -> float:
    return measure.moment(k)


def cdf(measure: SpectralMeasure, x, left: bool = False) -> np.ndarray:
    return measure.cdf(x, left=left)


def quantiles(measure: SpectralMeasure, n: int) -> np.ndarray:
    return measure.quantiles(n)


def density(measure: SpectralMeasure, t) -> np.ndarray:
    return measure.pdf(t)


def ks_distance(
    empirical: EmpiricalSpectrum, measure: SpectralMeasure
) -> float:
    """
    Kolmogorov-Smirnov distance sup_x |F_n(x) - F(x)|.

    Both distribution functions are step-or-continuous, so the supremum
    is attained at a jump of one of them; both one-sided limits are
    compared there.
    """
    x = np.sort(np.asarray(empirical.values, dtype=float))
    n = x.size
    locs, _ = measure.atoms()
    points = np.unique(np.concatenate([x, locs]))
    emp_right = np.searchsorted(x, points, side="right") / n
    emp_left = np.searchsorted(x, points, side="left") / n
    gap_right = np.abs(emp_right - measure.cdf(points))
    gap_left = np.abs(emp_left - measure.cdf(points, left=True))
    return float(min(1.0, max(gap_right.max(), gap_left.max())))


# ==================== file format ====================

_MEASURE_KEYS = {
    "semicircle": {"kind", "sigma"},
    "marchenko_pastur": {"kind", "ratio"},
    "atomic": {"kind", "atoms", "weights"},
    "density_grid": {
        "kind",
        "support",
        "density",
        "edge_exponents",
        "atom_at_zero",
    },
}


def measure_from_dict(
    data: Mapping[str, Any],
    text: str | None = None,
    path: str | None = None,
) -> SpectralMeasure:
    """
    Build a measure from its JSON description.

    Raises:
        ConfigError: unknown kind, unknown or missing keys, bad values
    """

    def fail(message: str, key: str | None = None):
        line = json_key_line(text, key) if text and key else None
        raise ConfigError(message, path=path, line=line)

    if not isinstance(data, Mapping):
        fail("measure description must be a JSON object")
    kind = data.get("kind")
    if kind not in _MEASURE_KEYS:
        fail(f"unknown measure kind {kind!r}", "kind")
    for key in data:
        if key not in _MEASURE_KEYS[kind]:
            fail(f"unknown key {key!r} for kind {kind!r}", key)
    try:
        match kind:
            case "semicircle":
                return SemicircleMeasure(float(data.get("sigma", 1.0)))
            case "marchenko_pastur":
                return MarchenkoPasturMeasure(float(data["ratio"]))
            case "atomic":
                return AtomicMeasure(
                    tuple(map(float, data["atoms"])),
                    tuple(map(float, data["weights"])),
                )
            case _:
                return DensityMeasure.from_grid(
                    tuple(data["support"]),
                    data["density"],
                    tuple(data["edge_exponents"]),
                    float(data.get("atom_at_zero", 0.0)),
                )
    except KeyError as e:
        fail(f"missing key {e.args[0]!r} for kind {kind!r}", "kind")
    except (TypeError, ValueError) as e:
        fail(f"invalid {kind} measure: {e}", "kind")


def load_measure(path: str) -> SpectralMeasure:
    """Read a measure file (see measure_from_dict for the schema)."""
    data, text = read_json(path)
    return measure_from_dict(data, text=text, path=path)


def measure_to_dict(measure: SpectralMeasure) -> dict[str, Any]:
    """Inverse of measure_from_dict for the closed-form kinds."""
    match measure:
        case SemicircleMeasure(sigma=sigma):
            return {"kind": "semicircle", "sigma": sigma}
        case MarchenkoPasturMeasure(ratio=ratio):
            return {"kind": "marchenko_pastur", "ratio": ratio}
        case AtomicMeasure(locations=locs, weights=weights):
            return {
                "kind": "atomic",
                "atoms": list(locs),
                "weights": list(weights),
            }
    raise DomainError(f"{measure.kind} measures have no file form")


def dumps_measure(measure: SpectralMeasure) -> str:
    return json.dumps(measure_to_dict(measure), indent=2)
