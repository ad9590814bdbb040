import argparse
import json
import sys

from spikelab.errors import DomainError, SpikeLabError
from spikelab.logger import harness_logger
from spikelab.services.harness.config import SweepSpec, load_config
from spikelab.services.harness.report import (
    PlotStyle,
    emit_plot_data,
    write_report,
)
from spikelab.services.harness.runner import (
    ExperimentRunner,
    run_experiment,
    simulate,
)
from spikelab.theory.measure import load_measure
from spikelab.theory.prediction import (
    Model,
    SpikeSpec,
    predict,
    predict_in_gap,
)
from spikelab.theory.transforms import Transform, evaluate
from spikelab.utils import ensure_parent

__project__: str = "spikelab"
__version__: str = "0.1.0"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a number list: {text}") from e


def _pair(text: str) -> tuple[float, float]:
    values = _floats(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected 'c,d', got {text}")
    return values[0], values[1]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=__project__, description=f"CLI for {__project__}:{__version__}"
    )
    parser.add_argument(
        "-v",
        "--version",
        action="version",
        version=f"{__project__} {__version__}",
        help="Show program's version number and exit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="Predict outlier limits and overlaps.")
    p.add_argument("--measure", required=True, help="Measure JSON file.")
    p.add_argument(
        "--model",
        choices=[m.value for m in Model],
        default=Model.ADDITIVE.value,
    )
    p.add_argument(
        "--theta", type=_floats, required=True, help="Spikes, e.g. 2,0.5."
    )
    p.add_argument(
        "--gap",
        type=_pair,
        help="Predict inside the hole c,d of the support instead.",
    )

    t = sub.add_parser("transform", help="Evaluate G or T at a real point.")
    t.add_argument("--measure", required=True, help="Measure JSON file.")
    t.add_argument("--which", choices=["G", "T"], default="G")
    t.add_argument("--z", type=float, required=True)
    t.add_argument("--order", type=int, choices=[0, 1], default=0)

    for name, text in (
        ("simulate", "Run the trials of a config and write the CSV."),
        ("verify", "Run a config and compare with the predictions."),
    ):
        c = sub.add_parser(name, help=text)
        c.add_argument("--config", required=True, help="Experiment JSON.")
        c.add_argument("--no-progress", action="store_true")

    s = sub.add_parser("sweep", help="Sweep theta for a rank-one spike.")
    s.add_argument("--config", required=True, help="Experiment JSON.")
    s.add_argument("--param", choices=["theta"], default="theta")
    s.add_argument("--from", dest="start", type=float)
    s.add_argument("--to", dest="stop", type=float)
    s.add_argument("--steps", type=int)
    s.add_argument(
        "--predict-only",
        action="store_true",
        help="Only the predicted curve, no sampling.",
    )
    s.add_argument(
        "--style",
        choices=[p.value for p in PlotStyle],
        default=PlotStyle.TRANSITION_CURVE.value,
    )
    s.add_argument("--out", help="Plot CSV path (default: outputs.plot_csv).")
    s.add_argument("--no-progress", action="store_true")
    return parser


def _predict(options) -> int:
    measure = load_measure(options.measure)
    spikes = SpikeSpec.of(options.theta)
    if options.gap is not None:
        which = (
            Transform.G if options.model == Model.ADDITIVE else Transform.T
        )
        found = predict_in_gap(measure, options.gap, spikes, which)
        print(json.dumps([{"theta": t, "limit": z} for t, z in found]))
        return EXIT_OK
    prediction = predict(measure, spikes, options.model)
    print(json.dumps(prediction.to_records(), indent=2))
    return EXIT_OK


def _transform(options) -> int:
    measure = load_measure(options.measure)
    value = evaluate(measure, options.which, options.z, options.order)
    print(repr(value))
    return EXIT_OK


def _sweep(options) -> int:
    config = load_config(options.config)
    values = None
    if options.start is not None or options.stop is not None:
        if None in (options.start, options.stop, options.steps):
            raise DomainError("--from, --to and --steps go together")
        values = SweepSpec(options.start, options.stop, options.steps).values()
    runner = ExperimentRunner(config, progress=not options.no_progress)
    report = runner.sweep(values, simulate=not options.predict_only)
    if config.outputs.report is not None:
        write_report(report, ensure_parent(config.outputs.report))
    path = options.out or config.outputs.plot_csv
    if path is not None:
        ensure_parent(path)
    text = emit_plot_data(report, options.style, path)
    if path is None:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    options = build_parser().parse_args(argv)
    try:
        match options.command:
            case "predict":
                return _predict(options)
            case "transform":
                return _transform(options)
            case "simulate":
                config = load_config(options.config)
                records = simulate(config, progress=not options.no_progress)
                print(f"{len(records)} trial(s) done")
                return EXIT_OK
            case "verify":
                config = load_config(options.config)
                report = run_experiment(
                    config, progress=not options.no_progress
                )
                print(json.dumps(report.to_dict(), indent=2))
                return EXIT_OK if report.passed else EXIT_FAILED
            case "sweep":
                return _sweep(options)
    except SpikeLabError as e:
        harness_logger.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR
    except OSError as e:
        harness_logger.error("I/O error: %s", e)
        return EXIT_ERROR
    return EXIT_ERROR


def run():
    sys.exit(main())
