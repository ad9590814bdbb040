import json
from pathlib import Path

import pandas as pd
import pytest

from spikelab.errors import ConfigError, DomainError
from spikelab.services.harness.config import (
    SweepSpec,
    Tolerances,
    config_from_dict,
    load_config,
)
from spikelab.services.harness.report import (
    PlotStyle,
    Quantity,
    SweepPoint,
    SweepReport,
    VerificationReport,
    build_rows,
    emit_plot_data,
)
from spikelab.services.harness.runner import (
    ExperimentRunner,
    run_experiment,
    sweep_experiment,
)
from spikelab.services.lab.ensembles import EnsembleKind, EnsembleSpec
from spikelab.theory.measure import SemicircleMeasure
from spikelab.theory.prediction import Model, SpikeSpec, predict

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _config_dict(**overrides):
    data = {
        "schema": 1,
        "ensemble": {"kind": "goe", "n": 60},
        "spikes": [5.0],
        "model": "additive",
        "trials": 3,
        "seed": 5,
        "tolerances": {"eigenvalue_abs": 0.5, "overlap_abs": 0.3},
    }
    data.update(overrides)
    return data


@pytest.mark.parametrize(
    "path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem
)
def test_shipped_configs_are_valid(path):
    config = load_config(str(path))
    assert config.trials >= 1


def test_config_defaults():
    config = config_from_dict(_config_dict())
    assert config.ensemble.kind == EnsembleKind.GOE
    assert config.ensemble.sigma == 1.0
    assert config.model == Model.ADDITIVE
    assert config.k_top == 1
    assert config.k_bottom == 0
    assert config.threads is None
    assert config.sweep is None
    assert config.outputs.report is None


def test_config_round_trip_and_hash():
    config = config_from_dict(
        _config_dict(
            ensemble={"kind": "wishart_real", "n": 40, "ratio": 0.5},
            spikes=[0.5, 2.0],
            sweep={"param": "theta", "from": 0.5, "to": 1.5, "steps": 3},
        )
    )
    assert config.spikes.thetas == (2.0, 0.5)
    assert config.ensemble.m == 80
    assert config_from_dict(config.to_dict()) == config
    assert config.sha256() == config_from_dict(config.to_dict()).sha256()
    other = config_from_dict(_config_dict(seed=6))
    assert other.sha256() != config_from_dict(_config_dict()).sha256()


def test_threads_do_not_change_the_hash():
    base = config_from_dict(_config_dict())
    threaded = config_from_dict(_config_dict(threads=2))
    assert threaded.threads == 2
    assert threaded.sha256() == base.sha256()


def test_unknown_key_is_located(write_json):
    text = json.dumps(_config_dict(colour="blue"), indent=2)
    with pytest.raises(ConfigError) as excinfo:
        load_config(write_json("config.json", text))
    error = excinfo.value
    assert "colour" in str(error)
    assert error.line == text.splitlines().index('  "colour": "blue"') + 1
    assert error.path.endswith("config.json")


@pytest.mark.parametrize(
    "overrides",
    [
        {"schema": 2},
        {"model": "rotational"},
        {"trials": 0},
        {"trials": 2.5},
        {"seed": -1},
        {"seed": True},
        {"spikes": []},
        {"spikes": [0.0]},
        {"spikes": "2.0"},
        {"ensemble": {"kind": "goe"}},
        {"ensemble": {"kind": "cauchy", "n": 10}},
        {"ensemble": {"kind": "goe", "n": 10, "size": 3}},
        {"ensemble": {"kind": "goe", "n": 10, "sigma": "1"}},
        {"ensemble": {"kind": "wishart_real", "n": 10}},
        {"tolerances": {"eigenvalue_abs": 0.0}},
        {"outputs": {"report": 3}},
        {"outputs": {"log": "a.log"}},
        {"sweep": {"param": "n", "from": 1, "to": 2, "steps": 2}},
    ],
)
def test_invalid_configs(overrides):
    with pytest.raises(ConfigError):
        config_from_dict(_config_dict(**overrides))


def test_missing_required_key():
    data = _config_dict()
    del data["seed"]
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict(data)


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.json"))


def test_sweep_values():
    assert SweepSpec(0.5, 1.5, 3).values() == pytest.approx([0.5, 1.0, 1.5])
    assert SweepSpec(2.0, 3.0, 1).values() == [2.0]
    assert SweepSpec(2.0, 3.0, 0).values() == []


def test_tolerances_must_be_positive():
    with pytest.raises(DomainError):
        Tolerances(0.0, 0.1)


def _aggregates(eigen, eigen_err, overlap, overlap_err):
    return pd.DataFrame(
        {
            "eigenvalue_mean": eigen,
            "eigenvalue_stderr": eigen_err,
            "overlap_mean": overlap,
            "overlap_stderr": overlap_err,
        }
    )


def test_build_rows_pass_and_fail():
    prediction = predict(SemicircleMeasure(), SpikeSpec((2.0,)), "additive")
    rows = build_rows(
        prediction, _aggregates([2.53], [0.01], [0.71], [0.02]), Tolerances()
    )
    assert [row.quantity for row in rows] == [
        Quantity.EIGENVALUE,
        Quantity.OVERLAP,
    ]
    assert rows[0].passed is True
    assert rows[1].passed is True
    rows = build_rows(
        prediction, _aggregates([2.6], [0.01], [0.75], [0.02]), Tolerances()
    )
    assert rows[0].passed is False
    assert not VerificationReport(tuple(rows)).passed


def test_build_rows_subcritical_uses_wider_tolerance():
    prediction = predict(SemicircleMeasure(), SpikeSpec((0.5,)), "additive")
    rows = build_rows(
        prediction, _aggregates([1.92], [0.01], [0.01], [0.01]), Tolerances()
    )
    assert rows[0].tolerance == pytest.approx(0.1)
    assert rows[0].passed is True
    assert rows[0].detectable is False


def test_unknown_overlap_is_informational():
    prediction = predict(SemicircleMeasure(), SpikeSpec((1.0,)), "additive")
    rows = build_rows(
        prediction, _aggregates([2.0], [0.01], [0.3], [0.02]), Tolerances()
    )
    assert rows[1].predicted is None
    assert rows[1].passed is None
    assert VerificationReport(tuple(rows)).passed


def test_emit_plot_data(tmp_path):
    report = SweepReport(
        Model.ADDITIVE,
        (
            SweepPoint(0.5, 2.0, 0.0, False),
            SweepPoint(2.0, 2.5, 0.75, True, 2.49, 0.01, 0.74, 0.02),
        ),
    )
    path = tmp_path / "plot.csv"
    text = emit_plot_data(report, PlotStyle.OVERLAP_CURVE, str(path))
    assert path.read_text() == text
    lines = text.splitlines()
    assert lines[0] == "theta,predicted,empirical_mean,empirical_stderr"
    assert lines[1] == "0.5,0,,"
    assert lines[2].startswith("2,0.75,0.73999")
    curve = emit_plot_data(report, "transition_curve")
    assert curve.splitlines()[2].startswith("2,2.5,2.4900")


def test_emit_plot_data_needs_a_sweep():
    with pytest.raises(DomainError):
        emit_plot_data(VerificationReport(()))


def test_verify_writes_outputs(tmp_path):
    report_path = tmp_path / "out" / "report.json"
    trials_path = tmp_path / "out" / "trials.csv"
    config = config_from_dict(
        _config_dict(
            outputs={
                "report": str(report_path),
                "trials_csv": str(trials_path),
            }
        )
    )
    report = run_experiment(config, progress=False)
    assert report.passed
    assert len(report.rows) == 2
    saved = json.loads(report_path.read_text())
    assert saved["passed"] is True
    assert saved["metadata"]["config_sha256"] == config.sha256()
    assert saved["metadata"]["trials"] == 3
    assert set(saved["metadata"]["versions"]) >= {"numpy", "scipy"}
    assert len(pd.read_csv(trials_path)) == 3


def test_verify_fails_with_tight_tolerances():
    config = config_from_dict(
        _config_dict(tolerances={"eigenvalue_abs": 1e-12, "overlap_abs": 1})
    )
    assert not ExperimentRunner(config, progress=False).verify().passed


def test_verify_is_reproducible(tmp_path):
    report_path = tmp_path / "report.json"
    trials_path = tmp_path / "trials.csv"
    reports, csvs = [], []
    for threads in (1, 3):
        config = config_from_dict(
            _config_dict(
                threads=threads,
                outputs={
                    "report": str(report_path),
                    "trials_csv": str(trials_path),
                },
            )
        )
        run_experiment(config, progress=False)
        reports.append(report_path.read_bytes())
        csvs.append(trials_path.read_bytes())
    assert csvs[0] == csvs[1]
    assert reports[0] == reports[1]


def test_sweep_predict_only():
    config = config_from_dict(_config_dict())
    report = sweep_experiment(config, [0.0, 0.5, 2.0], simulate=False)
    assert [p.theta for p in report.points] == [0.5, 2.0]
    assert report.points[0].predicted_limit == 2.0
    assert report.points[1].predicted_limit == pytest.approx(2.5)
    assert report.points[1].eigenvalue_mean is None


def test_sweep_with_trials_uses_config_grid():
    config = config_from_dict(
        _config_dict(
            sweep={"param": "theta", "from": 3.0, "to": 4.0, "steps": 2}
        )
    )
    report = ExperimentRunner(config, progress=False).sweep()
    assert [p.theta for p in report.points] == [3.0, 4.0]
    for point in report.points:
        assert point.eigenvalue_mean == pytest.approx(
            point.predicted_limit, abs=0.5
        )
    assert report.to_dict()["model"] == "additive"


def test_fixed_diagonal_multiplicative_is_exact():
    config = load_config(str(CONFIGS / "fixed_diagonal_multiplicative.json"))
    runner = ExperimentRunner(config, progress=False)
    records = runner.simulate()
    assert records[0].spike_eigenvalues[0] == pytest.approx(1.5)
    assert records[0].overlaps_sq[0] == pytest.approx(1.0)
    prediction = runner.predict()
    assert prediction[0].limit == pytest.approx(1.5)
    assert prediction[0].overlap_sq == pytest.approx(1.0)


def test_non_numeric_eigenvalue_is_located(write_json):
    data = _config_dict(
        ensemble={"kind": "fixed_diagonal", "n": 2, "eigenvalues": ["a", 1]}
    )
    text = json.dumps(data, indent=2)
    with pytest.raises(ConfigError) as excinfo:
        load_config(write_json("config.json", text))
    lines = text.splitlines()
    expected = next(
        i for i, line in enumerate(lines, 1) if '"eigenvalues"' in line
    )
    assert excinfo.value.line == expected
    assert "eigenvalues" in str(excinfo.value)


def test_ensemble_spec_rejects_non_numeric_eigenvalues():
    with pytest.raises(DomainError):
        EnsembleSpec(EnsembleKind.FIXED_DIAGONAL, 2, eigenvalues=("a", 1))


@pytest.mark.parametrize(
    "name",
    [
        "wigner_additive",
        "wigner_subcritical",
        "wishart_multiplicative",
        "wishart_similarity",
    ],
)
def test_golden_configs_use_the_full_scenario(name):
    config = load_config(str(CONFIGS / f"{name}.json"))
    assert config.trials == 100
    assert config.ensemble.n == 1000
    if config.ensemble.kind == EnsembleKind.WISHART_REAL:
        assert config.ensemble.m == 4000
