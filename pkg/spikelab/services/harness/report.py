"""
Verification reports and plot data.

Pass/fail is a pure function of the predictions, the trial aggregates
and the tolerances: see ``build_rows``.
"""

import io
import json
from dataclasses import asdict, dataclass, field
from enum import StrEnum
from importlib.metadata import PackageNotFoundError, version
from typing import Any

import pandas as pd

from spikelab.errors import DomainError
from spikelab.logger import harness_logger
from spikelab.services.harness.config import ExperimentConfig, Tolerances
from spikelab.theory.prediction import Model, SpikePrediction

PLOT_COLUMNS = ["theta", "predicted", "empirical_mean", "empirical_stderr"]
CSV_FLOAT_FORMAT = "%.17g"


class Quantity(StrEnum):
    EIGENVALUE = "eigenvalue"
    OVERLAP = "overlap"


class PlotStyle(StrEnum):
    TRANSITION_CURVE = "transition_curve"
    OVERLAP_CURVE = "overlap_curve"


@dataclass(frozen=True)
class ReportRow:
    spike: int
    theta: float
    quantity: Quantity
    predicted: float | None
    empirical_mean: float
    empirical_stderr: float
    tolerance: float
    passed: bool | None
    detectable: bool = True


def build_rows(
    prediction: SpikePrediction,
    aggregates: pd.DataFrame,
    tolerances: Tolerances,
) -> list[ReportRow]:
    """
    Compare predictions with trial means.

    Subcritical eigenvalues are compared with the bulk edge using twice
    the eigenvalue tolerance. Unknown overlaps give informational rows
    (passed is None).
    """
    rows = []
    for i, outcome in enumerate(prediction):
        stats = aggregates.loc[i]
        eig_tol = tolerances.eigenvalue_abs * (
            1 if outcome.detectable else 2
        )
        eig_mean = float(stats["eigenvalue_mean"])
        rows.append(
            ReportRow(
                spike=i,
                theta=outcome.theta,
                quantity=Quantity.EIGENVALUE,
                predicted=outcome.limit,
                empirical_mean=eig_mean,
                empirical_stderr=float(stats["eigenvalue_stderr"]),
                tolerance=eig_tol,
                passed=abs(eig_mean - outcome.limit) <= eig_tol,
                detectable=outcome.detectable,
            )
        )
        ovl_mean = float(stats["overlap_mean"])
        predicted = outcome.overlap_sq
        rows.append(
            ReportRow(
                spike=i,
                theta=outcome.theta,
                quantity=Quantity.OVERLAP,
                predicted=predicted,
                empirical_mean=ovl_mean,
                empirical_stderr=float(stats["overlap_stderr"]),
                tolerance=tolerances.overlap_abs,
                passed=(
                    None
                    if predicted is None
                    else abs(ovl_mean - predicted) <= tolerances.overlap_abs
                ),
                detectable=outcome.detectable,
            )
        )
    return rows


def package_versions() -> dict[str, str]:
    found = {}
    for name in ("spikelab", "numpy", "scipy", "pandas"):
        try:
            found[name] = version(name)
        except PackageNotFoundError:
            found[name] = "unknown"
    return found


def report_metadata(config: ExperimentConfig) -> dict[str, Any]:
    return {
        "config_sha256": config.sha256(),
        "versions": package_versions(),
        "trials": config.trials,
        "seed": config.seed,
        "model": str(config.model),
        "ensemble": str(config.ensemble.kind),
        "n": config.ensemble.n,
    }


@dataclass(frozen=True)
class VerificationReport:
    rows: tuple[ReportRow, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(row.passed is not False for row in self.rows)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "rows": [asdict(row) for row in self.rows],
            "metadata": self.metadata,
        }


@dataclass(frozen=True)
class SweepPoint:
    theta: float
    predicted_limit: float
    predicted_overlap: float | None
    detectable: bool
    eigenvalue_mean: float | None = None
    eigenvalue_stderr: float | None = None
    overlap_mean: float | None = None
    overlap_stderr: float | None = None


@dataclass(frozen=True)
class SweepReport:
    model: Model
    points: tuple[SweepPoint, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": str(self.model),
            "points": [asdict(p) for p in self.points],
            "metadata": self.metadata,
        }


def write_report(report: VerificationReport | SweepReport, path: str) -> str:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    harness_logger.info("report written to %s", path)
    return path


def emit_plot_data(
    report: SweepReport,
    style: PlotStyle | str = PlotStyle.TRANSITION_CURVE,
    path: str | None = None,
) -> str:
    """
    CSV of the predicted curve next to the empirical points.

    Columns: theta, predicted, empirical_mean, empirical_stderr. Missing
    values (no simulation, unknown overlap) are left empty.

    Raises:
        DomainError: ``report`` is not a sweep
    """
    if not isinstance(report, SweepReport):
        raise DomainError("plot data needs a sweep report")
    style = PlotStyle(style)
    eig = style == PlotStyle.TRANSITION_CURVE
    rows = [
        {
            "theta": p.theta,
            "predicted": p.predicted_limit if eig else p.predicted_overlap,
            "empirical_mean": p.eigenvalue_mean if eig else p.overlap_mean,
            "empirical_stderr": (
                p.eigenvalue_stderr if eig else p.overlap_stderr
            ),
        }
        for p in report.points
    ]
    frame = pd.DataFrame(rows, columns=PLOT_COLUMNS)
    buffer = io.StringIO()
    frame.to_csv(
        buffer, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"
    )
    text = buffer.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        harness_logger.info("plot data (%s) written to %s", style, path)
    return text
