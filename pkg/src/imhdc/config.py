"""Run configuration: task defaults, JSON config files and noise parameters."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from imhdc.assocmem import METRICS
from imhdc.crossbar import COMPLEMENT_SHIFTS, NoiseModel
from imhdc.encoder import ENCODER_KINDS, PERMUTATION_MODES

TASKS = ("language", "news", "emg", "synth")
BACKENDS = ("ideal", "crossbar")

#: n-gram size, symbol count and class count per task.
TASK_DEFAULTS = {
    "language": {"n": 4, "h": 27, "c": 22},
    "news": {"n": 5, "h": 27, "c": 8},
    "emg": {"n": 5, "h": 4, "c": 5},
    "synth": {"n": 4, "h": 27, "c": 22},
}

DEFAULT_SYNTH = {
    "classes": 22,
    "seed": 7,
    "length": 20000,
    "mixing": 0.38,
    "test_per_class": 50,
    "query_length": 100,
}


@dataclass(frozen=True)
class RunConfig:
    task: str = "synth"
    d: int = 10000
    n: int | None = None
    encoder: str = "exact"
    permutation_mode: str = "circular"
    metric: str = "dotp"
    backend: str = "ideal"
    f: int = 10
    f_values: tuple[int, ...] = (1, 2, 10)
    noise: dict = field(default_factory=dict)
    adc_bits: int | None = 8
    complement_shift: str = "right"
    im_seed: int = 1
    layout_seed: int = 0
    data: str | None = None
    synth: dict = field(default_factory=lambda: dict(DEFAULT_SYNTH))
    workers: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.n is None:
            object.__setattr__(self, "n", TASK_DEFAULTS[self.task]["n"])
        object.__setattr__(self, "f_values", tuple(int(v) for v in self.f_values))
        object.__setattr__(self, "synth", {**DEFAULT_SYNTH, **self.synth})
        checks = [
            (self.d >= 1, "d must be >= 1"),
            (self.n >= 1, "n must be >= 1"),
            (self.encoder in ENCODER_KINDS, f"encoder must be one of {ENCODER_KINDS}"),
            (self.permutation_mode in PERMUTATION_MODES, f"permutation_mode must be one of {PERMUTATION_MODES}"),
            (self.metric in METRICS, f"metric must be one of {METRICS}"),
            (self.backend in BACKENDS, f"backend must be one of {BACKENDS}"),
            (self.complement_shift in COMPLEMENT_SHIFTS, f"complement_shift must be one of {COMPLEMENT_SHIFTS}"),
            (self.workers >= 1, "workers must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        self.noise_model()  # validates noise parameters

    @property
    def h(self) -> int:
        return TASK_DEFAULTS[self.task]["h"]

    def noise_model(self) -> NoiseModel:
        return NoiseModel(**self.noise)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["f_values"] = list(self.f_values)
        out["noise"] = self.noise_model().to_dict()
        return out


def load_json(path) -> dict:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {p}") from None
    if not isinstance(data, dict):
        raise ValueError(f"config file {p} must hold a JSON object")
    return data


def bundled_config(name: str) -> dict:
    """A config shipped with the package, e.g. ``"partition_sweep"``."""
    text = resources.files("imhdc").joinpath(f"configs/{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def merge(flags: dict, file_values: dict | None) -> RunConfig:
    """Build a config from flag values; values from a config file take precedence."""
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {k: v for k, v in flags.items() if v is not None and k in fields}
    for k, v in (file_values or {}).items():
        if k not in fields:
            raise ValueError(f"unknown config key {k!r}")
        if k in ("noise", "synth") and isinstance(v, dict):
            v = {**values.get(k, {}), **v}
        values[k] = v
    return RunConfig(**values)
