"""
Monte Carlo trials: sample, deform, diagonalise, record.

Every trial owns a Philox stream seeded from (master seed, trial index),
so a run gives the same records whatever the thread count or the order
in which trials finish.
"""

import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from spikelab.errors import DomainError, NumericalFailureError
from spikelab.logger import lab_logger
from spikelab.services.lab.ensembles import (
    Deformation,
    EnsembleSpec,
    deform,
    sample_ensemble,
)
from spikelab.theory.master_equation import WeightedMeasure
from spikelab.theory.prediction import Model, SpikeSpec
from spikelab.utils import resolve_threads

CSV_FLOAT_FORMAT = "%.17g"
# relative size below which an eigenvalue of a product model is a kernel zero
KERNEL_RTOL = 1e-10


@dataclass(frozen=True)
class TrialRecord:
    """
    Outcome of one trial.

    ``top_eigenvalues`` descend from lambda_1, ``bottom_eigenvalues``
    ascend from lambda_n. For spike i, ``spike_eigenvalues[i]`` is the
    eigenvalue it is matched with and ``overlaps_sq[i]`` the squared norm
    of the projection of that eigenvector onto the span of all frame
    columns sharing theta_i; ``column_overlaps[i][j]`` projects on column j
    alone.
    """

    seed: int
    top_eigenvalues: tuple[float, ...]
    bottom_eigenvalues: tuple[float, ...]
    spike_eigenvalues: tuple[float, ...]
    overlaps_sq: tuple[float, ...]
    column_overlaps: tuple[tuple[float, ...], ...] = ()
    wallclock: float = field(default=0.0, compare=False)


def spike_index(i: int, thetas, n: int, zeros: int = 0) -> int:
    """
    Position (descending order) of the eigenvalue spike i produces.

    ``zeros`` trailing eigenvalues are kernel zeros of a rank-deficient
    X in the multiplicative models; negative spikes sit above them.
    """
    r = len(thetas)
    return i if thetas[i] > 0 else n - zeros - r + i


def kernel_zeros(values: np.ndarray, model: Model | str) -> int:
    """Number of structural zeros of X(I+P) (none in the additive model)."""
    if Model(model) == Model.ADDITIVE or values.size == 0:
        return 0
    scale = float(np.max(np.abs(values)))
    return int(np.count_nonzero(np.abs(values) <= KERNEL_RTOL * scale))


def spectrum_and_overlaps(
    deformed,
    frame: np.ndarray | None = None,
    k_top: int = 1,
    k_bottom: int = 0,
    thetas=None,
    model: Model | str = Model.ADDITIVE,
    seed: int = 0,
) -> TrialRecord:
    """
    Diagonalise a deformed matrix and measure the spike overlaps.

    ``deformed`` is either a Deformation or a Hermitian matrix, in which
    case ``frame`` is required and ``thetas`` defaults to treating every
    column as its own positive spike.

    Raises:
        NumericalFailureError: the eigensolver did not converge
    """
    if isinstance(deformed, Deformation):
        matrix, frame = deformed.matrix, deformed.frame
        thetas, model = deformed.thetas, deformed.model
    else:
        matrix = np.asarray(deformed)
        if frame is None:
            raise DomainError("a frame is needed with a bare matrix")
    model = Model(model)
    frame = np.asarray(frame)
    if frame.ndim == 1:
        frame = frame[:, None]
    n, r = frame.shape
    if thetas is None:
        thetas = (1.0,) * r
    thetas = tuple(float(t) for t in thetas)
    if not (0 <= k_top <= n and 0 <= k_bottom <= n):
        raise DomainError(f"k_top/k_bottom must lie in 0..{n}")

    try:
        values, vectors = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"eigh failed: {e}") from e
    values, vectors = values[::-1], vectors[:, ::-1]

    zeros = min(kernel_zeros(values, model), n - r)
    picked = [spike_index(i, thetas, n, zeros) for i in range(r)]
    spike_vectors = vectors[:, picked]
    if model == Model.MULTIPLICATIVE:
        # right eigenvectors of X (I+P) are (I+P)^{-1/2} times those of S
        shift = 1.0 / np.sqrt(1.0 + np.asarray(thetas)) - 1.0
        spike_vectors = spike_vectors + frame @ (
            shift[:, None] * (frame.conj().T @ spike_vectors)
        )
        spike_vectors /= np.linalg.norm(spike_vectors, axis=0)

    proj = np.abs(frame.conj().T @ spike_vectors) ** 2
    theta_arr = np.asarray(thetas)
    grouped = [
        float(np.sum(proj[theta_arr == thetas[i], i])) for i in range(r)
    ]
    return TrialRecord(
        seed=int(seed),
        top_eigenvalues=tuple(values[:k_top].tolist()),
        bottom_eigenvalues=tuple(values[::-1][:k_bottom].tolist()),
        spike_eigenvalues=tuple(values[picked].tolist()),
        overlaps_sq=tuple(min(1.0, g) for g in grouped),
        column_overlaps=tuple(tuple(col.tolist()) for col in proj.T),
    )


def weighted_measure(
    frame_or_vector: np.ndarray,
    lambdas: np.ndarray,
    i: int = 0,
    j: int = 0,
    basis: np.ndarray | None = None,
) -> WeightedMeasure:
    """
    mu_ij = sum_k conj(u_ki) u_kj delta_{lambda_k}.

    ``basis`` holds the eigenvectors of X as columns when the frame is
    given in the original coordinates.
    """
    frame = np.asarray(frame_or_vector)
    if basis is not None:
        frame = np.asarray(basis).conj().T @ frame
    return WeightedMeasure.from_frame(frame, lambdas, i, j)


def trial_seed(master_seed: int, index: int) -> int:
    if master_seed < 0:
        raise DomainError(f"seed must be non-negative, got {master_seed}")
    state = np.random.SeedSequence([master_seed, index]).generate_state(
        1, dtype=np.uint64
    )
    return int(state[0])


class TrialRunner:
    NAME = "TrialRunner"
    DESCRIPTION = "Run seeded spiked-matrix trials in parallel."

    def __init__(
        self,
        ensemble: EnsembleSpec,
        spikes: SpikeSpec,
        model: Model | str,
        k_top: int = 1,
        k_bottom: int = 0,
        threads: int | None = None,
    ):
        self.ensemble = ensemble
        self.spikes = spikes
        self.model = Model(model)
        self.k_top = k_top
        self.k_bottom = k_bottom
        self.threads = resolve_threads(threads)

    def run_one(self, seed: int) -> TrialRecord:
        started = time.perf_counter()
        rng = np.random.Generator(np.random.Philox(seed))
        x = sample_ensemble(self.ensemble, rng)
        deformation = deform(
            x, self.spikes, self.model, rng, self.ensemble.is_complex
        )
        record = spectrum_and_overlaps(
            deformation, k_top=self.k_top, k_bottom=self.k_bottom, seed=seed
        )
        elapsed = time.perf_counter() - started
        lab_logger.debug("trial seed=%d took %.3fs", seed, elapsed)
        return TrialRecord(
            record.seed,
            record.top_eigenvalues,
            record.bottom_eigenvalues,
            record.spike_eigenvalues,
            record.overlaps_sq,
            record.column_overlaps,
            wallclock=elapsed,
        )

    def run(
        self, trials: int, seed: int, progress: bool = True
    ) -> list[TrialRecord]:
        """Run ``trials`` trials; records come back in trial-index order."""
        if trials < 1:
            raise DomainError(f"trials must be >= 1, got {trials}")
        seeds = [trial_seed(seed, i) for i in range(trials)]
        records: list[TrialRecord | None] = [None] * trials
        lab_logger.info(
            "running %d %s trial(s) of %s n=%d on %d thread(s)",
            trials,
            self.model,
            self.ensemble.kind,
            self.ensemble.n,
            self.threads,
        )
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            futures = {
                pool.submit(self.run_one, s): i for i, s in enumerate(seeds)
            }
            for future in tqdm(
                as_completed(futures),
                total=trials,
                desc="trials",
                disable=not progress,
            ):
                records[futures[future]] = future.result()
        return records


def run_trials(
    ensemble: EnsembleSpec,
    spikes: SpikeSpec,
    model: Model | str,
    trials: int,
    seed: int,
    k_top: int = 1,
    k_bottom: int = 0,
    threads: int | None = None,
    progress: bool = True,
) -> list[TrialRecord]:
    runner = TrialRunner(ensemble, spikes, model, k_top, k_bottom, threads)
    return runner.run(trials, seed, progress)


def trials_frame(
    records: list[TrialRecord], include_timing: bool = False
) -> pd.DataFrame:
    """One row per trial, columns as in the trial CSV."""
    rows = []
    for rec in records:
        row = {"seed": rec.seed}
        top = rec.top_eigenvalues
        row |= {f"lambda_{k + 1}": v for k, v in enumerate(top)}
        row |= {f"mu_{k + 1}": v for k, v in enumerate(rec.bottom_eigenvalues)}
        row |= {
            f"spike_eigenvalue_{i + 1}": v
            for i, v in enumerate(rec.spike_eigenvalues)
        }
        row |= {f"overlap_{i + 1}": v for i, v in enumerate(rec.overlaps_sq)}
        if include_timing:
            row["wallclock"] = rec.wallclock
        rows.append(row)
    frame = pd.DataFrame(rows)
    if not frame.empty:
        frame["seed"] = frame["seed"].astype("uint64")
    return frame


def write_trials_csv(
    records: list[TrialRecord], path: str, include_timing: bool = False
) -> str:
    """Write the per-trial CSV (17 significant digits) and return path."""
    frame = trials_frame(records, include_timing)
    frame.to_csv(
        path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"
    )
    lab_logger.info("wrote %d trial row(s) to %s", len(frame), path)
    return path


def aggregate(records: list[TrialRecord]) -> pd.DataFrame:
    """
    Per-spike mean and standard error of eigenvalue and overlap.

    Index is the spike position; columns are eigenvalue_mean,
    eigenvalue_stderr, overlap_mean, overlap_stderr.
    """
    eig = pd.DataFrame([r.spike_eigenvalues for r in records])
    ovl = pd.DataFrame([r.overlaps_sq for r in records])
    count = len(records)

    def stderr(df):
        if count < 2:
            return pd.Series(0.0, index=df.columns)
        return df.std(ddof=1) / np.sqrt(count)

    return pd.DataFrame(
        {
            "eigenvalue_mean": eig.mean(),
            "eigenvalue_stderr": stderr(eig),
            "overlap_mean": ovl.mean(),
            "overlap_stderr": stderr(ovl),
        }
    )
