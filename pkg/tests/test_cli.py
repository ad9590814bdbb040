import json
from pathlib import Path

import pytest

from spikelab.cli import EXIT_ERROR, EXIT_FAILED, EXIT_OK, main

MEASURES = Path(__file__).resolve().parent.parent / "configs" / "measures"


def _config(write_json, **overrides):
    data = {
        "schema": 1,
        "ensemble": {"kind": "goe", "n": 50},
        "spikes": [4.0],
        "model": "additive",
        "trials": 2,
        "seed": 3,
        "tolerances": {"eigenvalue_abs": 0.6, "overlap_abs": 0.3},
    }
    data.update(overrides)
    return write_json("config.json", data)


def test_predict(capsys):
    code = main(
        [
            "predict",
            "--measure",
            str(MEASURES / "semicircle.json"),
            "--theta",
            "0.5,2",
        ]
    )
    assert code == EXIT_OK
    records = json.loads(capsys.readouterr().out)
    assert [r["theta"] for r in records] == [2.0, 0.5]
    assert records[0]["limit"] == pytest.approx(2.5)
    assert records[0]["overlap_sq"] == pytest.approx(0.75)
    assert records[1]["detectable"] is False


def test_predict_multiplicative(capsys):
    code = main(
        [
            "predict",
            "--measure",
            str(MEASURES / "marchenko_pastur.json"),
            "--model",
            "similarity",
            "--theta",
            "1",
        ]
    )
    assert code == EXIT_OK
    (record,) = json.loads(capsys.readouterr().out)
    assert record["limit"] == pytest.approx(2.5)
    assert record["overlap_sq"] == pytest.approx(0.6)


def test_predict_in_gap(capsys):
    code = main(
        [
            "predict",
            "--measure",
            str(MEASURES / "two_atoms.json"),
            "--theta",
            "1,-1",
            "--gap",
            "0.01,1.99",
        ]
    )
    assert code == EXIT_OK
    found = json.loads(capsys.readouterr().out)
    assert [f["theta"] for f in found] == [1.0, -1.0]
    assert found[1]["limit"] == pytest.approx((1 + 5**0.5) / 2)


def test_transform(capsys):
    code = main(
        [
            "transform",
            "--measure",
            str(MEASURES / "semicircle.json"),
            "--z",
            "2.5",
        ]
    )
    assert code == EXIT_OK
    assert float(capsys.readouterr().out) == pytest.approx(0.5)


def test_transform_on_the_support_is_an_error():
    code = main(
        [
            "transform",
            "--measure",
            str(MEASURES / "semicircle.json"),
            "--z",
            "0.5",
        ]
    )
    assert code == EXIT_ERROR


def test_missing_measure_file(tmp_path):
    code = main(
        ["predict", "--measure", str(tmp_path / "x.json"), "--theta", "1"]
    )
    assert code == EXIT_ERROR


def test_bad_arguments_exit_through_argparse():
    with pytest.raises(SystemExit) as excinfo:
        main(["predict", "--measure", "m.json", "--theta", "a,b"])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0


def test_simulate_writes_csv(write_json, tmp_path, capsys):
    csv_path = tmp_path / "trials.csv"
    path = _config(write_json, outputs={"trials_csv": str(csv_path)})
    assert main(["simulate", "--config", path, "--no-progress"]) == EXIT_OK
    assert "2 trial(s)" in capsys.readouterr().out
    assert csv_path.read_text().startswith("seed,lambda_1,")


def test_verify_exit_codes(write_json, capsys):
    path = _config(write_json)
    assert main(["verify", "--config", path, "--no-progress"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] is True
    tight = _config(
        write_json, tolerances={"eigenvalue_abs": 1e-12, "overlap_abs": 1e-12}
    )
    assert main(["verify", "--config", tight, "--no-progress"]) == EXIT_FAILED


def test_verify_with_bad_config(write_json):
    path = write_json("config.json", '{\n  "schema": 1,\n  "bogus": 1\n}')
    assert main(["verify", "--config", path]) == EXIT_ERROR


def test_verify_with_non_numeric_eigenvalues(write_json, caplog):
    path = _config(
        write_json,
        ensemble={"kind": "fixed_diagonal", "n": 2, "eigenvalues": ["a", 1]},
    )
    assert main(["verify", "--config", path, "--no-progress"]) == EXIT_ERROR
    assert "eigenvalues" in caplog.text
    assert "line" in caplog.text


def test_sweep_predict_only(write_json, tmp_path):
    out = tmp_path / "curve.csv"
    path = _config(write_json)
    code = main(
        [
            "sweep",
            "--config",
            path,
            "--from",
            "0.5",
            "--to",
            "2",
            "--steps",
            "4",
            "--predict-only",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "theta,predicted,empirical_mean,empirical_stderr"
    assert len(lines) == 5
    assert lines[1] == "0.5,2,,"


def test_sweep_to_stdout(write_json, capsys):
    path = _config(
        write_json,
        sweep={"param": "theta", "from": 2.0, "to": 2.0, "steps": 1},
    )
    code = main(
        [
            "sweep",
            "--config",
            path,
            "--predict-only",
            "--style",
            "overlap_curve",
        ]
    )
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].startswith("2,0.7")


def test_sweep_needs_a_complete_range(write_json):
    path = _config(write_json)
    code = main(["sweep", "--config", path, "--from", "0.5"])
    assert code == EXIT_ERROR
