"""
Random matrix ensembles and low-rank deformations.

Normalisations put the limiting spectrum on a fixed interval:

- GOE / GUE: off-diagonal entries of variance sigma^2 / n, so the
  semicircle has radius 2 sigma.
- Wishart: G G* / m with G an n x m standard Gaussian matrix, so the
  spectrum follows Marchenko-Pastur with c = n / m.
- Rademacher: symmetric +-sigma / sqrt(n) entries, an experimental
  non-invariant Wigner matrix (no correctness guarantee on predictions).
"""

from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from spikelab.errors import DomainError
from spikelab.logger import lab_logger
from spikelab.theory.measure import (
    AtomicMeasure,
    MarchenkoPasturMeasure,
    SemicircleMeasure,
    SpectralMeasure,
)
from spikelab.theory.prediction import Model, SpikeSpec


class EnsembleKind(StrEnum):
    GOE = "goe"
    GUE = "gue"
    WISHART_REAL = "wishart_real"
    WISHART_COMPLEX = "wishart_complex"
    FIXED_DIAGONAL = "fixed_diagonal"
    RADEMACHER = "rademacher"


WIGNER_KINDS = {EnsembleKind.GOE, EnsembleKind.GUE, EnsembleKind.RADEMACHER}
WISHART_KINDS = {EnsembleKind.WISHART_REAL, EnsembleKind.WISHART_COMPLEX}
COMPLEX_KINDS = {EnsembleKind.GUE, EnsembleKind.WISHART_COMPLEX}


@dataclass(frozen=True)
class EnsembleSpec:
    """
    Which random matrix to draw.

    Args:
        kind: the ensemble
        n: matrix size
        sigma: scale of Wigner-type ensembles
        m: Wishart sample count; derived from ``ratio`` when omitted
        ratio: Wishart c = n / m
        eigenvalues: diagonal of a FixedDiagonal matrix
    """

    kind: EnsembleKind
    n: int
    sigma: float = 1.0
    m: int | None = None
    ratio: float | None = None
    eigenvalues: tuple[float, ...] | None = None

    def __post_init__(self):
        kind = EnsembleKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not (isinstance(self.n, int) and self.n >= 1):
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if kind in WIGNER_KINDS and not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if kind in WISHART_KINDS:
            m = self.m
            if m is None:
                if self.ratio is None or not self.ratio > 0:
                    raise DomainError("Wishart needs m or a positive ratio")
                m = round(self.n / self.ratio)
            if m < 1:
                raise DomainError(f"Wishart needs m >= 1, got {m}")
            object.__setattr__(self, "m", int(m))
        if kind == EnsembleKind.FIXED_DIAGONAL:
            values = self.eigenvalues
            if values is None or len(values) != self.n:
                raise DomainError("FixedDiagonal needs n eigenvalues")
            try:
                values = tuple(float(v) for v in values)
            except (TypeError, ValueError) as e:
                raise DomainError(f"eigenvalues must be numbers: {e}") from e
            object.__setattr__(self, "eigenvalues", values)

    @property
    def is_complex(self) -> bool:
        return self.kind in COMPLEX_KINDS


def limiting_measure(spec: EnsembleSpec) -> SpectralMeasure:
    """Limiting spectral measure of the ensemble as n grows."""
    if spec.kind in WIGNER_KINDS:
        return SemicircleMeasure(spec.sigma)
    if spec.kind in WISHART_KINDS:
        return MarchenkoPasturMeasure(spec.n / spec.m)
    n = spec.n
    return AtomicMeasure(spec.eigenvalues, (1.0 / n,) * n)


def _gaussian(rng: np.random.Generator, shape, is_complex: bool):
    if not is_complex:
        return rng.standard_normal(shape)
    return (
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ) / np.sqrt(2.0)


def haar_frame(
    n: int, r: int, rng: np.random.Generator, is_complex: bool = False
) -> np.ndarray:
    """
    First r columns of a Haar orthogonal (or unitary) matrix.

    QR of a Gaussian matrix, with the phases of diag(R) moved into Q so
    that the factorisation is unique and Q is exactly Haar.
    """
    if not 1 <= r <= n:
        raise DomainError(f"frame rank r={r} must lie in 1..{n}")
    q, upper = np.linalg.qr(_gaussian(rng, (n, r), is_complex))
    diag = np.diagonal(upper)
    mags = np.abs(diag)
    phases = np.where(mags > 0, diag / np.where(mags > 0, mags, 1.0), 1.0)
    return q * phases


def sample_ensemble(spec: EnsembleSpec, rng: np.random.Generator):
    """Draw one symmetric (or Hermitian) n x n matrix."""
    n = spec.n
    match spec.kind:
        case EnsembleKind.GOE | EnsembleKind.GUE:
            a = _gaussian(rng, (n, n), spec.is_complex)
            x = (a + a.conj().T) * (spec.sigma / np.sqrt(2.0 * n))
            if not spec.is_complex:
                # diagonal variance sigma^2 / n, as off the diagonal
                x[np.diag_indices(n)] /= np.sqrt(2.0)
            return x
        case EnsembleKind.RADEMACHER:
            signs = rng.choice((-1.0, 1.0), size=(n, n))
            upper = np.triu(signs)
            return (upper + np.triu(signs, 1).T) * (spec.sigma / np.sqrt(n))
        case EnsembleKind.WISHART_REAL | EnsembleKind.WISHART_COMPLEX:
            g = _gaussian(rng, (n, spec.m), spec.is_complex)
            w = g @ g.conj().T / spec.m
            return 0.5 * (w + w.conj().T)
        case EnsembleKind.FIXED_DIAGONAL:
            return np.diag(np.asarray(spec.eigenvalues, dtype=float))


# ==================== deformations ====================


@dataclass(frozen=True, eq=False)
class Deformation:
    """
    A deformed matrix together with the frame that deformed it.

    For the multiplicative and similarity models ``matrix`` is the
    Hermitian form (I+P)^{1/2} X (I+P)^{1/2}, which has the eigenvalues of
    X (I+P). Unpacks as ``matrix, frame``.
    """

    matrix: np.ndarray
    frame: np.ndarray
    thetas: tuple[float, ...]
    model: Model
    base: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.matrix, self.frame))

    def root(self, power: float) -> np.ndarray:
        """(I + P)^power for the multiplicative models."""
        u = self.frame
        shift = (1.0 + np.asarray(self.thetas)) ** power - 1.0
        return np.eye(u.shape[0]) + (u * shift) @ u.conj().T

    def product_matrix(self) -> np.ndarray:
        """X + P, or the non-Hermitian product X (I + P)."""
        u = self.frame
        p = (u * np.asarray(self.thetas)) @ u.conj().T
        if self.model == Model.ADDITIVE:
            return self.base + p
        return self.base @ (np.eye(u.shape[0]) + p)


def _check_nonnegative(x: np.ndarray):
    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    try:
        np.linalg.cholesky(x + 1e-10 * scale * np.eye(x.shape[0]))
    except np.linalg.LinAlgError as e:
        raise DomainError(
            "multiplicative deformations need a non-negative definite X"
        ) from e


def deform(
    x: np.ndarray,
    spikes: SpikeSpec,
    model: Model | str,
    rng: np.random.Generator,
    is_complex: bool | None = None,
) -> Deformation:
    """
    Apply P = U diag(theta) U* with a Haar frame U.

    Raises:
        DomainError: multiplicative/similarity model with an indefinite X
            or some theta <= -1; rank larger than n
    """
    model = Model(model)
    x = np.asarray(x)
    n = x.shape[0]
    if is_complex is None:
        is_complex = np.iscomplexobj(x)
    frame = haar_frame(n, spikes.r, rng, is_complex)
    thetas = np.asarray(spikes.thetas)
    if model == Model.ADDITIVE:
        out = x + (frame * thetas) @ frame.conj().T
    else:
        if np.any(thetas <= -1.0):
            raise DomainError("multiplicative spikes need theta > -1")
        _check_nonnegative(x)
        shift = np.sqrt(1.0 + thetas) - 1.0
        root = np.eye(n) + (frame * shift) @ frame.conj().T
        out = root @ x @ root
    out = 0.5 * (out + out.conj().T)
    lab_logger.debug("deformed n=%d, r=%d, model=%s", n, spikes.r, model)
    return Deformation(out, frame, spikes.thetas, model, x)
