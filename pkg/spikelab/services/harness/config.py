"""
Experiment configuration files.

A config is a JSON object with ``"schema": 1``::

    {
      "schema": 1,
      "ensemble": {"kind": "goe", "n": 1000, "sigma": 1.0},
      "spikes": [2.0],
      "model": "additive",
      "trials": 100,
      "seed": 20240611,
      "tolerances": {"eigenvalue_abs": 0.05, "overlap_abs": 0.05},
      "outputs": {"report": "out/report.json", "trials_csv": "out/t.csv"}
    }

Optional keys: ``k_top``, ``k_bottom``, ``threads`` and ``sweep``
(``{"param": "theta", "from": 0.2, "to": 3.0, "steps": 15}``). Unknown
keys are rejected, and every error names the line of the offending key.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Any

from spikelab.errors import ConfigError, DomainError
from spikelab.services.lab.ensembles import EnsembleKind, EnsembleSpec
from spikelab.theory.prediction import Model, SpikeSpec
from spikelab.utils import json_key_line, read_json

SCHEMA_VERSION = 1
MAX_SEED = 2**64 - 1

_TOP_KEYS = {
    "schema",
    "ensemble",
    "spikes",
    "model",
    "trials",
    "seed",
    "tolerances",
    "outputs",
    "k_top",
    "k_bottom",
    "threads",
    "sweep",
}
_REQUIRED = {"schema", "ensemble", "spikes", "model", "trials", "seed"}
_ENSEMBLE_KEYS = {"kind", "n", "sigma", "m", "ratio", "eigenvalues"}
_TOLERANCE_KEYS = {"eigenvalue_abs", "overlap_abs"}
_OUTPUT_KEYS = {"report", "trials_csv", "plot_csv"}
_SWEEP_KEYS = {"param", "from", "to", "steps"}


@dataclass(frozen=True)
class Tolerances:
    eigenvalue_abs: float = 0.05
    overlap_abs: float = 0.05

    def __post_init__(self):
        if not (self.eigenvalue_abs > 0 and self.overlap_abs > 0):
            raise DomainError("tolerances must be positive")


@dataclass(frozen=True)
class Outputs:
    report: str | None = None
    trials_csv: str | None = None
    plot_csv: str | None = None


@dataclass(frozen=True)
class SweepSpec:
    start: float
    stop: float
    steps: int
    param: str = "theta"

    def values(self) -> list[float]:
        if self.steps == 1:
            return [self.start]
        width = (self.stop - self.start) / (self.steps - 1)
        return [self.start + k * width for k in range(self.steps)]


@dataclass(frozen=True)
class ExperimentConfig:
    ensemble: EnsembleSpec
    spikes: SpikeSpec
    model: Model
    trials: int
    seed: int
    tolerances: Tolerances = field(default_factory=Tolerances)
    outputs: Outputs = field(default_factory=Outputs)
    k_top: int = 1
    k_bottom: int = 0
    threads: int | None = None
    sweep: SweepSpec | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed <= MAX_SEED:
            raise DomainError(f"seed {self.seed} is not a 64-bit integer")

    def with_thetas(self, thetas) -> "ExperimentConfig":
        return replace(self, spikes=SpikeSpec.of(thetas))

    def to_dict(self) -> dict[str, Any]:
        ens = {
            k: v
            for k, v in asdict(self.ensemble).items()
            if v is not None
        }
        data = {
            "schema": SCHEMA_VERSION,
            "ensemble": ens,
            "spikes": list(self.spikes.thetas),
            "model": str(self.model),
            "trials": self.trials,
            "seed": self.seed,
            "tolerances": asdict(self.tolerances),
            "outputs": asdict(self.outputs),
            "k_top": self.k_top,
            "k_bottom": self.k_bottom,
        }
        data["ensemble"]["kind"] = str(self.ensemble.kind)
        if "eigenvalues" in ens:
            data["ensemble"]["eigenvalues"] = list(ens["eigenvalues"])
        if self.sweep is not None:
            data["sweep"] = {
                "param": self.sweep.param,
                "from": self.sweep.start,
                "to": self.sweep.stop,
                "steps": self.sweep.steps,
            }
        return data

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _numbers(raw) -> bool:
    return isinstance(raw, list) and all(
        isinstance(v, int | float) and not isinstance(v, bool) for v in raw
    )


class _Parser:
    """Field-by-field validation keeping track of the source text."""

    def __init__(self, text: str | None, path: str | None):
        self.text = text
        self.path = path

    def fail(self, message: str, key: str | None = None):
        raise ConfigError(
            message, path=self.path, line=json_key_line(self.text, key)
        )

    def obj(self, data, name: str, allowed: set[str]) -> dict:
        if not isinstance(data, dict):
            self.fail(f"'{name}' must be a JSON object", name)
        for key in data:
            if key not in allowed:
                self.fail(f"unknown key '{key}' in {name}", key)
        return data

    def number(self, data: dict, key: str, default=None, integer=False):
        if key not in data:
            if default is None:
                self.fail(f"missing required key '{key}'", None)
            return default
        value = data[key]
        ok = isinstance(value, int) if integer else isinstance(
            value, int | float
        )
        if isinstance(value, bool) or not ok:
            kind = "an integer" if integer else "a number"
            self.fail(f"'{key}' must be {kind}, got {value!r}", key)
        return value

    def ensemble(self, raw) -> EnsembleSpec:
        data = self.obj(raw, "ensemble", _ENSEMBLE_KEYS)
        if "kind" not in data:
            self.fail("ensemble needs a 'kind'", "ensemble")
        try:
            kind = EnsembleKind(data["kind"])
        except ValueError:
            choices = ", ".join(k.value for k in EnsembleKind)
            self.fail(
                f"unknown ensemble kind {data['kind']!r} ({choices})", "kind"
            )
        values = data.get("eigenvalues")
        if values is not None and not _numbers(values):
            self.fail("'eigenvalues' must be a list of numbers", "eigenvalues")
        try:
            return EnsembleSpec(
                kind=kind,
                n=self.number(data, "n", integer=True),
                sigma=float(self.number(data, "sigma", 1.0)),
                m=self.number(data, "m", 0, integer=True) or None,
                ratio=self.number(data, "ratio", 0.0) or None,
                eigenvalues=tuple(values) if values is not None else None,
            )
        except DomainError as e:
            self.fail(str(e), "ensemble")

    def spikes(self, raw) -> SpikeSpec:
        if not _numbers(raw):
            self.fail("'spikes' must be a list of numbers", "spikes")
        try:
            return SpikeSpec.of(raw)
        except DomainError as e:
            self.fail(str(e), "spikes")

    def sweep(self, raw) -> SweepSpec:
        data = self.obj(raw, "sweep", _SWEEP_KEYS)
        if data.get("param", "theta") != "theta":
            self.fail("only 'theta' sweeps are supported", "param")
        steps = self.number(data, "steps", integer=True)
        if steps < 0:
            self.fail("'steps' must be >= 0", "steps")
        return SweepSpec(
            float(self.number(data, "from")),
            float(self.number(data, "to")),
            steps,
        )

    def config(self, data) -> ExperimentConfig:
        data = self.obj(data, "config", _TOP_KEYS)
        for key in sorted(_REQUIRED - data.keys()):
            self.fail(f"missing required key '{key}'")
        if data["schema"] != SCHEMA_VERSION:
            self.fail(
                f"unsupported schema {data['schema']!r} "
                f"(expected {SCHEMA_VERSION})",
                "schema",
            )
        try:
            model = Model(data["model"])
        except ValueError:
            self.fail(f"unknown model {data['model']!r}", "model")
        tol = self.obj(
            data.get("tolerances", {}), "tolerances", _TOLERANCE_KEYS
        )
        out = self.obj(data.get("outputs", {}), "outputs", _OUTPUT_KEYS)
        for key, value in out.items():
            if value is not None and not isinstance(value, str):
                self.fail(f"output '{key}' must be a path string", key)
        threads = data.get("threads")
        if threads is not None:
            threads = self.number(data, "threads", integer=True)
        try:
            return ExperimentConfig(
                ensemble=self.ensemble(data["ensemble"]),
                spikes=self.spikes(data["spikes"]),
                model=model,
                trials=self.number(data, "trials", integer=True),
                seed=self.number(data, "seed", integer=True),
                tolerances=Tolerances(
                    float(self.number(tol, "eigenvalue_abs", 0.05)),
                    float(self.number(tol, "overlap_abs", 0.05)),
                ),
                outputs=Outputs(**out),
                k_top=self.number(data, "k_top", 1, integer=True),
                k_bottom=self.number(data, "k_bottom", 0, integer=True),
                threads=threads,
                sweep=self.sweep(data["sweep"]) if "sweep" in data else None,
            )
        except DomainError as e:
            self.fail(str(e))


def config_from_dict(
    data: Any, text: str | None = None, path: str | None = None
) -> ExperimentConfig:
    """
    Validate a decoded config document.

    Raises:
        ConfigError: schema violation, with the line when ``text`` is given
    """
    return _Parser(text, path).config(data)


def load_config(path: str) -> ExperimentConfig:
    data, text = read_json(path)
    return config_from_dict(data, text=text, path=path)
