"""
Exact finite-n description of the outliers of a low-rank deformation.

With X = diag(lambda) (in its eigenbasis), U an n x r orthonormal frame
and Theta = diag(theta),

    M(z) = I_r - U* K(z) U Theta,  K(z) = (z - X)^{-1}      (additive)
                                   K(z) = (z - X)^{-1} X    (multiplicative)

and z outside the spectrum of X is an eigenvalue of X + U Theta U*
(resp. X (I + U Theta U*)) exactly when M(z) is singular. The kernel
vector w of M(z) gives the eigenvector K(z) U Theta w (times X^{-1}X
bookkeeping in the multiplicative case).

Roots are located on a grid, then counted exactly through the inertia of
the Hermitian pencil H(z) = Theta^{-1} - U* K(z) U, whose eigenvalues are
non-decreasing in z on every interval free of poles.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root_scalar

from spikelab.errors import (
    DegenerateEigenvalueError,
    DomainError,
    NumericalFailureError,
    OutOfRangeError,
    PoleError,
)
from spikelab.logger import master_logger
from spikelab.theory.measure import AtomicMeasure
from spikelab.theory.prediction import Model

POLE_TOL = 1e-14
ORTHO_TOL = 1e-10
KERNEL_TOL = 1e-8
GRID_CELLS = 2048
WINDING_NODES = 512
AMBIGUOUS_DET = 1e-6
EDGE_CLIP = 1e-9
MAX_CROSS_CHECKS = 64


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """
    Complex measure sum_k conj(u_ki) u_kj delta_{lambda_k}.

    Diagonal ones (i == j) are probability measures.
    """

    atoms: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_frame(
        cls, frame: np.ndarray, lambdas: np.ndarray, i: int, j: int
    ) -> "WeightedMeasure":
        frame = np.asarray(frame)
        if frame.ndim == 1:
            frame = frame[:, None]
        r = frame.shape[1]
        if not (0 <= i < r and 0 <= j < r):
            raise DomainError(f"indices ({i}, {j}) outside frame rank {r}")
        weights = frame[:, i].conj() * frame[:, j]
        return cls(np.asarray(lambdas, dtype=float), weights)

    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    def total_mass(self) -> complex:
        return complex(np.sum(self.weights))

    def moment(self, k: int) -> complex:
        return complex(np.sum(self.weights * self.atoms**k))

    def cauchy_transform(self, z) -> complex:
        return complex(np.sum(self.weights / (z - self.atoms)))

    def as_spectral_measure(self) -> AtomicMeasure:
        """The diagonal case as an AtomicMeasure (weights made real)."""
        weights = self.weights.real
        if np.any(np.abs(self.weights.imag) > 1e-12) or np.any(
            weights < -1e-15
        ):
            raise DomainError("only diagonal weighted measures are positive")
        weights = np.clip(weights, 0.0, None)
        return AtomicMeasure(
            tuple(self.atoms.tolist()), tuple((weights / weights.sum()))
        )


@dataclass(frozen=True, eq=False)
class MasterEquationSystem:
    """
    Finite-n data of a deformation, expressed in the eigenbasis of X.

    Args:
        lambdas: eigenvalues of X (reordered descending)
        frame: n x r orthonormal frame, rows in the eigenbasis of X
        thetas: the r nonzero spikes
        model: additive, multiplicative or similarity; the last two share
            M(z) but differ in the eigenvector they reconstruct
        basis: eigenvectors of X as columns when built ``from_matrix``;
            reconstructed vectors are returned in the original basis
    """

    lambdas: np.ndarray
    frame: np.ndarray
    thetas: np.ndarray
    model: Model = Model.ADDITIVE
    basis: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        lambdas = np.asarray(self.lambdas, dtype=float).ravel()
        frame = np.asarray(self.frame)
        if frame.ndim == 1:
            frame = frame[:, None]
        if not np.iscomplexobj(frame):
            frame = frame.astype(float)
        thetas = np.asarray(self.thetas, dtype=float).ravel()
        model = Model(self.model)
        n, r = frame.shape
        if n != lambdas.size or r != thetas.size or r == 0:
            raise DomainError(
                f"shapes disagree: {lambdas.size} eigenvalues, frame "
                f"{frame.shape}, {thetas.size} spikes"
            )
        if np.any(thetas == 0.0):
            raise DomainError("spikes must be nonzero")
        gram = frame.conj().T @ frame
        if np.max(np.abs(gram - np.eye(r))) > ORTHO_TOL:
            raise DomainError("frame columns are not orthonormal")
        if model != Model.ADDITIVE:
            if np.any(lambdas < 0):
                raise DomainError("multiplicative model needs lambdas >= 0")
            if np.any(thetas <= -1.0):
                raise DomainError("multiplicative model needs theta > -1")
        order = np.argsort(-lambdas, kind="stable")
        basis = self.basis
        if basis is not None:
            basis = np.asarray(basis)[:, order]
            basis.flags.writeable = False
        lambdas, frame = lambdas[order], frame[order]
        for arr in (lambdas, frame, thetas):
            arr.flags.writeable = False
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def from_matrix(
        cls,
        matrix: np.ndarray,
        frame: np.ndarray,
        thetas,
        model: Model | str = Model.ADDITIVE,
    ) -> "MasterEquationSystem":
        """Diagonalise a Hermitian X and rotate the frame accordingly."""
        matrix = np.asarray(matrix)
        scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
        if np.max(np.abs(matrix - matrix.conj().T)) > 1e-10 * scale:
            raise DomainError("X must be symmetric or Hermitian")
        try:
            lambdas, vectors = np.linalg.eigh(matrix)
        except np.linalg.LinAlgError as e:
            raise NumericalFailureError(f"eigh failed: {e}") from e
        frame = np.asarray(frame)
        if frame.ndim == 1:
            frame = frame[:, None]
        rotated = vectors.conj().T @ frame
        return cls(lambdas, rotated, thetas, Model(model), basis=vectors)

    @property
    def n(self) -> int:
        return self.lambdas.size

    @property
    def r(self) -> int:
        return self.thetas.size

    @property
    def scale(self) -> float:
        return float(self.lambdas[0] - self.lambdas[-1] + 1.0)

    def spectral_radius_bound(self) -> float:
        """A bound on |eigenvalue| of the deformed matrix, plus one."""
        lam = float(np.max(np.abs(self.lambdas)))
        if self.model == Model.ADDITIVE:
            return lam + float(np.max(np.abs(self.thetas))) + 1.0
        stretch = max(1.0, float(np.max(np.abs(1.0 + self.thetas))))
        return lam * stretch + 1.0

    def kernel(self, z) -> np.ndarray:
        """Diagonal of K(z), shape z.shape + (n,)."""
        z = np.asarray(z)
        diff = z[..., None] - self.lambdas
        near = np.abs(diff) < POLE_TOL
        if np.any(near):
            *where, k = np.argwhere(near)[0]
            raise PoleError(complex(z[tuple(where)]), self.lambdas[k])
        if self.model == Model.ADDITIVE:
            return 1.0 / diff
        return self.lambdas / diff

    def compressed(self, z) -> np.ndarray:
        """U* K(z) U, shape z.shape + (r, r)."""
        k = self.kernel(z)
        u = self.frame
        return np.einsum("ki,...k,kj->...ij", u.conj(), k, u)

    def hermitian_form(self, z) -> np.ndarray:
        """H(z) = Theta^{-1} - U* K(z) U for real z."""
        return np.diag(1.0 / self.thetas) - self.compressed(z)

    def negative_count(self, z) -> np.ndarray:
        """Number of negative eigenvalues of H(z)."""
        eigs = np.linalg.eigvalsh(self.hermitian_form(np.asarray(z, float)))
        return np.sum(eigs < 0.0, axis=-1)

    def weighted_measure(self, i: int, j: int) -> WeightedMeasure:
        return WeightedMeasure.from_frame(self.frame, self.lambdas, i, j)

    def deformed_matrix(self) -> np.ndarray:
        """Dense deformed matrix in the eigenbasis of X (for checks)."""
        u, lam = self.frame, self.lambdas
        perturbation = (u * self.thetas) @ u.conj().T
        if self.model == Model.ADDITIVE:
            return np.diag(lam) + perturbation
        if self.model == Model.MULTIPLICATIVE:
            return lam[:, None] * (np.eye(self.n) + perturbation)
        root = _similarity_root(self)
        return root @ np.diag(lam) @ root

    def to_original(self, x: np.ndarray) -> np.ndarray:
        return x if self.basis is None else self.basis @ x


def _similarity_root(system: MasterEquationSystem) -> np.ndarray:
    u = system.frame
    shift = np.sqrt(1.0 + system.thetas) - 1.0
    return np.eye(system.n) + (u * shift) @ u.conj().T


# ==================== M(z) ====================


def eval_M(system: MasterEquationSystem, z) -> np.ndarray:
    """
    M(z) = I - U* K(z) U Theta; z may be a scalar or an array.

    Raises:
        PoleError: z within 1e-14 of an eigenvalue of X
    """
    return np.eye(system.r) - system.compressed(z) * system.thetas


def det_M(system: MasterEquationSystem, z):
    """det M(z); real (as a float or float array) for real z."""
    z = np.asarray(z)
    det = np.linalg.det(eval_M(system, z))
    if np.iscomplexobj(z) and np.any(np.asarray(z).imag != 0):
        return det
    det = np.real(det)
    return float(det) if det.ndim == 0 else det


def argument_principle_count(
    system: MasterEquationSystem,
    c: float,
    d: float,
    nodes: int = WINDING_NODES,
) -> int:
    """Zeros of det M inside the circle with diameter [c, d]."""
    center, radius = 0.5 * (c + d), 0.5 * (d - c)
    phi = 2 * np.pi * np.arange(nodes) / nodes
    z = center + radius * np.exp(1j * phi)
    dets = np.linalg.det(eval_M(system, z))
    phase = np.unwrap(np.angle(np.append(dets, dets[0])))
    return round((phase[-1] - phase[0]) / (2 * np.pi))


# ==================== eigenvalues ====================


def _search_interval(system, interval) -> tuple[float, float] | None:
    lo, hi = map(float, interval)
    if not lo < hi:
        raise DomainError(f"interval ({lo}, {hi}) is empty")
    lam = system.lambdas
    inside = (lam > lo) & (lam < hi)
    if np.any(inside):
        raise DomainError(
            f"interval ({lo}, {hi}) contains eigenvalue "
            f"{lam[inside][0]!r} of X"
        )
    clip = EDGE_CLIP * system.scale
    below, above = lam[lam <= lo], lam[lam >= hi]
    if below.size:
        lo = max(lo, float(below.max()) + clip)
    if above.size:
        hi = min(hi, float(above.min()) - clip)
    bound = system.spectral_radius_bound()
    lo, hi = max(lo, -bound), min(hi, bound)
    return (lo, hi) if lo < hi else None


def _refine_simple(system, a: float, b: float) -> float:
    fa, fb = det_M(system, a), det_M(system, b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa > 0) != (fb > 0):
        sol = root_scalar(
            lambda z: det_M(system, z),
            bracket=(a, b),
            method="brentq",
            xtol=1e-15,
        )
        if sol.converged:
            return sol.root
    # det did not change sign: bisect on the crossing branch instead
    target = int(system.negative_count(a))
    while True:
        m = 0.5 * (a + b)
        if not a < m < b:
            return m
        if int(system.negative_count(m)) == target:
            a = m
        else:
            b = m


def _resolve_cell(system, a, b, na, nb) -> list[float]:
    drop = na - nb
    if drop <= 0:
        return []
    if drop == 1:
        return [_refine_simple(system, a, b)]
    m = 0.5 * (a + b)
    if not a < m < b:
        return [m] * drop
    nm = int(system.negative_count(m))
    return _resolve_cell(system, a, m, na, nm) + _resolve_cell(
        system, m, b, nm, nb
    )


def _ambiguous_cells(dets: np.ndarray) -> set[int]:
    mags = np.abs(dets)
    no_change = np.sign(dets[:-1]) == np.sign(dets[1:])
    cells = set(
        np.nonzero(
            no_change & (np.minimum(mags[:-1], mags[1:]) < AMBIGUOUS_DET)
        )[0].tolist()
    )
    dips = np.nonzero((mags[1:-1] < mags[:-2]) & (mags[1:-1] < mags[2:]))[0]
    for i in dips + 1:
        cells.update(c for c in (i - 1, i) if no_change[c])
    return cells


def isolated_eigenvalues(
    system: MasterEquationSystem, interval: tuple[float, float]
) -> list[float]:
    """
    Eigenvalues of the deformed matrix in ``interval``, descending.

    The interval must not contain an eigenvalue of X; infinite ends are
    replaced by a bound on the deformed spectrum and ends equal to an
    eigenvalue of X are moved 1e-9 * scale away from it. Eigenvalues are
    repeated according to multiplicity.

    Raises:
        DomainError: the interval contains an eigenvalue of X
    """
    bounds = _search_interval(system, interval)
    if bounds is None:
        return []
    lo, hi = bounds
    grid = np.linspace(lo, hi, GRID_CELLS + 1)
    counts = system.negative_count(grid)
    if np.any(np.diff(counts) > 0):
        master_logger.warning(
            "inertia of H(z) increased on (%g, %g); roots may be missed",
            lo,
            hi,
        )
    dets = det_M(system, grid)

    roots = []
    for i in np.nonzero(counts[:-1] > counts[1:])[0]:
        roots += _resolve_cell(
            system, grid[i], grid[i + 1], int(counts[i]), int(counts[i + 1])
        )

    checked = sorted(_ambiguous_cells(dets))[:MAX_CROSS_CHECKS]
    for i in checked:
        expected = int(counts[i] - counts[i + 1])
        winding = argument_principle_count(system, grid[i], grid[i + 1])
        if winding != expected:
            master_logger.warning(
                "cell [%.12g, %.12g]: winding count %d, inertia count %d",
                grid[i],
                grid[i + 1],
                winding,
                expected,
            )
    master_logger.debug(
        "%d eigenvalue(s) in (%g, %g), %d cell(s) cross-checked",
        len(roots),
        lo,
        hi,
        len(checked),
    )
    return sorted(roots, reverse=True)


def outliers(system: MasterEquationSystem) -> list[float]:
    """All eigenvalues of the deformed matrix outside [lambda_n, lambda_1]."""
    top, bottom = float(system.lambdas[0]), float(system.lambdas[-1])
    return isolated_eigenvalues(system, (top, np.inf)) + isolated_eigenvalues(
        system, (-np.inf, bottom)
    )


# ==================== eigenvectors ====================


def _kernel_vector(system, z: float) -> np.ndarray:
    m = eval_M(system, z)
    try:
        _, sing, vh = np.linalg.svd(m)
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"SVD of M({z!r}) failed: {e}") from e
    if sing.size >= 2 and sing[-2] < KERNEL_TOL:
        raise DegenerateEigenvalueError(z, sing)
    return vh[-1].conj()


def _eigen_coordinates(system, z: float) -> np.ndarray:
    """Unit eigenvector at z, in the eigenbasis of X."""
    w = _kernel_vector(system, z)
    x = system.kernel(z) * (system.frame @ (system.thetas * w))
    if system.model == Model.SIMILARITY:
        shift = np.sqrt(1.0 + system.thetas) - 1.0
        x = x + system.frame @ (shift * (system.frame.conj().T @ x))
    norm = np.linalg.norm(x)
    if not norm > 0:
        raise NumericalFailureError(f"zero eigenvector at z={z!r}")
    return x / norm


def reconstruct_eigenvector(
    system: MasterEquationSystem, z: float
) -> np.ndarray:
    """
    Unit eigenvector of the deformed matrix for the isolated eigenvalue z.

    In the multiplicative model this is the right eigenvector of
    X (I + P); in the similarity model the eigenvector of
    (I + P)^{1/2} X (I + P)^{1/2}.

    Raises:
        DegenerateEigenvalueError: M(z) has a kernel of dimension >= 2
    """
    return system.to_original(_eigen_coordinates(system, float(z)))


def exact_overlaps(system: MasterEquationSystem, z: float) -> np.ndarray:
    """|<u_i, x>|^2 for each frame column u_i."""
    x = _eigen_coordinates(system, float(z))
    return np.abs(system.frame.conj().T @ x) ** 2


# ==================== rank one ====================


def _rank_one_kernel(lambdas, weights, model):
    lambdas = np.asarray(lambdas, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if lambdas.shape != weights.shape or not lambdas.size:
        raise DomainError("eigenvalues and weights must match in length")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-10:
        raise DomainError("weights must be non-negative and sum to 1")
    model = Model(model)
    if model != Model.ADDITIVE and np.any(lambdas < 0):
        raise DomainError("multiplicative model needs lambdas >= 0")
    numer = weights if model == Model.ADDITIVE else weights * lambdas
    return lambdas, numer


def secular_rank_one(
    lambdas, weights_sq, theta: float, model: Model | str = Model.ADDITIVE
) -> float:
    """
    Outlier of a rank-one deformation from the secular equation

        sum_k w_k / (z - lambda_k) = 1/theta            (additive)
        sum_k w_k lambda_k / (z - lambda_k) = 1/theta   (multiplicative)

    on (lambda_1, inf) for theta > 0, (-inf, lambda_n) for theta < 0.

    Raises:
        OutOfRangeError: the branch never reaches 1/theta
    """
    if theta == 0:
        raise DomainError("theta must be nonzero")
    lambdas, numer = _rank_one_kernel(lambdas, weights_sq, model)
    target = 1.0 / theta
    upper = theta > 0
    edge = float(lambdas.max() if upper else lambdas.min())
    direction = 1.0 if upper else -1.0

    def f(z):
        return float(np.sum(numer / (z - lambdas))) - target

    def near(z):
        return f(z) > 0 if upper else f(z) < 0

    offset = EDGE_CLIP * (float(np.ptp(lambdas)) + 1.0)
    inner = edge + direction * offset
    while not near(inner):
        offset *= 0.5
        closer = edge + direction * offset
        if closer == edge:
            reach = f(inner) + target
            image = (0.0, reach) if upper else (reach, 0.0)
            raise OutOfRangeError(target, image, "1/theta")
        inner = closer
    outer_offset = 2 * offset
    for _ in range(2000):
        outer = edge + direction * outer_offset
        if not near(outer):
            break
        inner, outer_offset = outer, 2 * outer_offset
    else:
        raise NumericalFailureError("secular equation bracket did not close")
    lo, hi = sorted((inner, outer))
    sol = root_scalar(f, bracket=(lo, hi), method="brentq", xtol=1e-15)
    if not sol.converged:
        raise NumericalFailureError(f"brentq stopped: {sol.flag}")
    return sol.root


def rank_one_overlap(
    lambdas,
    weights_sq,
    theta: float,
    z: float,
    model: Model | str = Model.ADDITIVE,
) -> float:
    """|<u, x>|^2 at a root z of the rank-one secular equation."""
    lambdas, numer = _rank_one_kernel(lambdas, weights_sq, model)
    if Model(model) != Model.ADDITIVE:
        numer = numer * lambdas
    return float(1.0 / (theta**2 * np.sum(numer / (z - lambdas) ** 2)))
