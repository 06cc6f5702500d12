"""Experiment configuration: a small YAML/JSON schema with explicit defaults.

Every run embeds its fully-resolved configuration in the output for
provenance, so a result file alone reproduces the experiment.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

EXPERIMENT_KINDS = (
    "ber",
    "fer_coded",
    "mse_trace",
    "state_evolution",
    "coding_gain",
    "isac_sensing",
    "isac_fer",
)

DETECTOR_KINDS = ("mmse", "mrc", "map_spa", "hybrid_map_pic", "cross_domain")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass
class FrameConfig:
    m: int = 32
    n: int = 16
    delta_f: float = 15e3


@dataclass
class ChannelConfig:
    kind: str = "random"  # random | identity | fixed
    p: int = 4
    l_max: int = 10
    k_max: float = 6
    profile: str = "uniform"  # uniform | exponential
    decay: float = 0.1
    fractional: bool = False
    distinct_delays: bool = False
    # explicit paths for kind == "fixed": lists of equal length
    gains_re: list = field(default_factory=list)
    gains_im: list = field(default_factory=list)
    delays: list = field(default_factory=list)
    dopplers: list = field(default_factory=list)


@dataclass
class DetectorConfig:
    kind: str = "mmse"
    L: int = 1
    iterations: int = 5
    damping: float | None = None
    max_iters: int = 10  # inner message-passing sweeps


@dataclass
class CodeConfig:
    name: str = "D"
    outer_iters: int = 2


@dataclass
class ExperimentConfig:
    experiment: str = "ber"
    frame: FrameConfig = field(default_factory=FrameConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    code: CodeConfig = field(default_factory=CodeConfig)
    constellation: str = "bpsk"
    snr_db: list = field(default_factory=lambda: [10.0])
    trials: int = 1000
    target_errors: int = 0  # 0 disables early stopping
    batch: int = 64  # early-stop decision granularity, in trials
    seed: int = 0
    jobs: int = 1
    scenario: str = ""  # path to a scenario file for isac experiments
    power_allocation: str = "radar"  # radar | equal (isac experiments)
    precoding: bool = True  # isac_fer: virtual-index precoding on/off
    error_weights: list = field(default_factory=lambda: [1, 2, 3, 5])  # coding_gain

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENT_KINDS:
            raise ConfigError(f"experiment: unknown kind {self.experiment!r}")
        if self.detector.kind not in DETECTOR_KINDS:
            raise ConfigError(f"detector.kind: unknown kind {self.detector.kind!r}")
        if self.frame.m < 1 or self.frame.n < 1:
            raise ConfigError("frame.m/frame.n: must be positive")
        if self.channel.kind not in ("random", "identity", "fixed"):
            raise ConfigError(f"channel.kind: unknown kind {self.channel.kind!r}")
        if self.channel.kind == "fixed":
            lens = {
                len(self.channel.gains_re),
                len(self.channel.gains_im),
                len(self.channel.delays),
                len(self.channel.dopplers),
            }
            if len(lens) != 1 or 0 in lens:
                raise ConfigError("channel: fixed paths need equal-length gain/delay/doppler lists")
        if self.code.name not in ("A", "B", "C", "D"):
            raise ConfigError(f"code.name: must be one of A-D, got {self.code.name!r}")
        if not self.snr_db:
            raise ConfigError("snr_db: need at least one sweep point")
        if self.trials < 1:
            raise ConfigError("trials: must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs: must be positive")
        if self.batch < 1:
            raise ConfigError("batch: must be positive")
        if self.experiment.startswith("isac") and not self.scenario:
            raise ConfigError("scenario: isac experiments need a scenario file")
        if self.power_allocation not in ("radar", "equal"):
            raise ConfigError("power_allocation: must be 'radar' or 'equal'")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: dict) -> "ExperimentConfig":
        record = dict(record)
        known = {
            "frame": FrameConfig,
            "channel": ChannelConfig,
            "detector": DetectorConfig,
            "code": CodeConfig,
        }
        kwargs = {}
        for key, value in record.items():
            if key in known:
                sub = known[key]
                valid = sub.__dataclass_fields__
                bad = set(value) - set(valid)
                if bad:
                    raise ConfigError(f"{key}.{bad.pop()}: unknown field")
                kwargs[key] = sub(**value)
            elif key in cls.__dataclass_fields__:
                kwargs[key] = value
            else:
                raise ConfigError(f"{key}: unknown field")
        return cls(**kwargs).validate()

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            record = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"unparseable config file: {exc}") from exc
        if not isinstance(record, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_dict(record)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
