import time

from spikelab.logger import harness_logger
from spikelab.services.harness.config import ExperimentConfig
from spikelab.services.harness.report import (
    SweepPoint,
    SweepReport,
    VerificationReport,
    build_rows,
    report_metadata,
    write_report,
)
from spikelab.services.lab.ensembles import limiting_measure
from spikelab.services.lab.trials import (
    TrialRecord,
    aggregate,
    run_trials,
    write_trials_csv,
)
from spikelab.theory.prediction import SpikePrediction, SpikeSpec, predict
from spikelab.utils import ensure_parent


class ExperimentRunner:
    NAME = "ExperimentRunner"
    DESCRIPTION = "Check spike predictions against Monte Carlo trials."

    def __init__(self, config: ExperimentConfig, progress: bool = True):
        self.config = config
        self.progress = progress
        self.measure = limiting_measure(config.ensemble)

    def predict(self, spikes: SpikeSpec | None = None) -> SpikePrediction:
        return predict(
            self.measure, spikes or self.config.spikes, self.config.model
        )

    def simulate(self, config: ExperimentConfig | None = None):
        """Run the configured trials; records in trial-index order."""
        cfg = config or self.config
        return run_trials(
            cfg.ensemble,
            cfg.spikes,
            cfg.model,
            cfg.trials,
            cfg.seed,
            k_top=cfg.k_top,
            k_bottom=cfg.k_bottom,
            threads=cfg.threads,
            progress=self.progress,
        )

    def write_trials(self, records: list[TrialRecord]) -> str | None:
        path = self.config.outputs.trials_csv
        if path is None:
            return None
        ensure_parent(path)
        return write_trials_csv(records, path)

    def verify(self) -> VerificationReport:
        """
        Simulate, compare with the predictions and write the outputs.

        Returns:
            VerificationReport: one eigenvalue row and one overlap row per
            spike, plus metadata
        """
        started = time.perf_counter()
        prediction = self.predict()
        records = self.simulate()
        self.write_trials(records)
        rows = build_rows(
            prediction, aggregate(records), self.config.tolerances
        )
        report = VerificationReport(
            tuple(rows), report_metadata(self.config)
        )
        if self.config.outputs.report is not None:
            ensure_parent(self.config.outputs.report)
            write_report(report, self.config.outputs.report)
        harness_logger.info(
            "verification %s in %.1fs (%d rows)",
            "passed" if report.passed else "FAILED",
            time.perf_counter() - started,
            len(rows),
        )
        for row in rows:
            if row.passed is False:
                harness_logger.info(
                    "spike %d %s: predicted %.6g, measured %.6g +- %.2g",
                    row.spike,
                    row.quantity,
                    row.predicted,
                    row.empirical_mean,
                    row.empirical_stderr,
                )
        return report

    def sweep(self, values=None, simulate: bool = True) -> SweepReport:
        """
        Rank-one theta sweep.

        ``values`` defaults to the config's sweep grid. Zero is skipped.
        With ``simulate`` off only the predicted curve is produced.
        """
        if values is None:
            values = self.config.sweep.values() if self.config.sweep else []
        points = []
        for theta in values:
            if theta == 0:
                harness_logger.warning("skipping theta = 0 in sweep")
                continue
            outcome = self.predict(SpikeSpec((float(theta),)))[0]
            stats = {}
            if simulate:
                cfg = self.config.with_thetas([theta])
                row = aggregate(self.simulate(cfg)).loc[0]
                stats = {k: float(v) for k, v in row.items()}
            points.append(
                SweepPoint(
                    theta=float(theta),
                    predicted_limit=outcome.limit,
                    predicted_overlap=outcome.overlap_sq,
                    detectable=outcome.detectable,
                    **stats,
                )
            )
        harness_logger.info(
            "sweep of %d point(s), simulate=%s", len(points), simulate
        )
        return SweepReport(
            self.config.model, tuple(points), report_metadata(self.config)
        )


def run_experiment(
    config: ExperimentConfig, progress: bool = True
) -> VerificationReport:
    return ExperimentRunner(config, progress).verify()


def simulate(config: ExperimentConfig, progress: bool = True):
    runner = ExperimentRunner(config, progress)
    records = runner.simulate()
    runner.write_trials(records)
    return records


def sweep_experiment(
    config: ExperimentConfig,
    values=None,
    simulate: bool = True,
    progress: bool = False,
) -> SweepReport:
    return ExperimentRunner(config, progress).sweep(values, simulate)
