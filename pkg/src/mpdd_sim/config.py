"""Experiment configuration: JSON schema, validation, and overrides.

A config document has one object per subsystem; unknown keys are rejected
so typos fail loudly.  `apply_overrides` implements the CLI's
``--set section.key=value`` flags on the raw dict before validation, and
every run writes the fully resolved document next to its outputs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, require

__all__ = [
    "SystemConfig", "SimConfig", "RisConfig", "ChannelConfig", "WaveformConfig",
    "DetectorConfig", "SweepConfig", "ExperimentConfig",
    "config_from_dict", "load_config", "apply_overrides",
]

SIM_MODES = ("none", "unoptimized", "optimized")
WAVEFORMS = ("ofdm", "otfs", "afdm")
DETECTORS = ("gabp", "lmmse", "zf")


@dataclass
class SystemConfig:
    n_tx: int = 1
    n_rx: int = 1

    def validate(self) -> None:
        require(self.n_tx >= 1 and self.n_rx >= 1, "system: antenna counts must be >= 1")


@dataclass
class SimConfig:
    mode: str = "none"
    tx_layers: int = 5
    rx_layers: int = 5
    atoms_x: int = 10
    atoms_z: int = 10
    layer_spacing: float = 5.0
    atom_spacing: float = 0.5
    feed_spacing: float | None = None
    assume_normal_incidence: bool = False
    opt_max_iters: int = 100
    opt_step_scale: float = 0.9
    opt_step_decay: float = 0.98
    opt_tol: float = 1e-8
    opt_patience: int = 5

    def validate(self) -> None:
        require(self.mode in SIM_MODES, f"sim: mode must be one of {SIM_MODES}, got {self.mode!r}")
        if self.mode != "none":
            require(self.tx_layers >= 1 and self.rx_layers >= 1,
                    "sim: layer counts must be >= 1")
            require(self.atoms_x >= 1 and self.atoms_z >= 1, "sim: atom counts must be >= 1")
            require(self.layer_spacing > 0 and self.atom_spacing > 0,
                    "sim: spacings must be positive")


@dataclass
class RisConfig:
    count: int = 0
    atoms_x: int = 8
    atoms_z: int = 8
    phase_mode: str = "zero"

    def validate(self) -> None:
        require(self.count >= 0, "ris: count must be >= 0")
        require(self.phase_mode in ("zero", "random"),
                f"ris: phase_mode must be 'zero' or 'random', got {self.phase_mode!r}")
        if self.count:
            require(self.atoms_x >= 1 and self.atoms_z >= 1, "ris: atom counts must be >= 1")


@dataclass
class ChannelConfig:
    paths: int = 5
    max_delay: int = 14
    max_doppler: float = 2.0
    delays: list | None = None
    dopplers: list | None = None
    ris_inbound_paths: int = 0
    ris_outbound_paths: int = 0

    def validate(self) -> None:
        require(self.paths >= 0, "channel: paths must be >= 0")
        require(self.max_delay >= 0 and self.max_doppler >= 0,
                "channel: delay/Doppler bounds must be >= 0")
        if self.delays is not None:
            require(len(self.delays) == self.paths,
                    f"channel: delays must list {self.paths} entries")
        if self.dopplers is not None:
            require(len(self.dopplers) == self.paths,
                    f"channel: dopplers must list {self.paths} entries")


@dataclass
class WaveformConfig:
    kind: str = "ofdm"
    num_symbols: int = 64
    otfs_rows: int | None = None
    otfs_cols: int | None = None
    afdm_chirp: float | None = None
    afdm_chirp2: float = 0.0

    def validate(self) -> None:
        require(self.kind in WAVEFORMS,
                f"waveform: kind must be one of {WAVEFORMS}, got {self.kind!r}")
        require(self.num_symbols >= 1, "waveform: num_symbols must be >= 1")
        if self.otfs_rows is not None or self.otfs_cols is not None:
            require(self.otfs_rows is not None and self.otfs_cols is not None,
                    "waveform: otfs_rows/otfs_cols must be given together")
            require(self.otfs_rows * self.otfs_cols == self.num_symbols,
                    "waveform: otfs grid must tile num_symbols")


@dataclass
class DetectorConfig:
    kind: str = "gabp"
    max_iters: int = 24
    damping: float = 0.5
    symbol_energy: float = 1.0

    def validate(self) -> None:
        require(self.kind in DETECTORS,
                f"detector: kind must be one of {DETECTORS}, got {self.kind!r}")
        require(self.max_iters >= 1, "detector: max_iters must be >= 1")
        require(0.0 < self.damping <= 1.0, "detector: damping must lie in (0, 1]")
        require(self.symbol_energy > 0, "detector: symbol_energy must be positive")


@dataclass
class SweepConfig:
    snr_db: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0])
    max_trials: int = 200
    min_bit_errors: int = 100

    def validate(self) -> None:
        require(len(self.snr_db) >= 1, "sweep: need at least one SNR point")
        require(self.max_trials >= 1, "sweep: max_trials must be >= 1")
        require(self.min_bit_errors >= 0, "sweep: min_bit_errors must be >= 0")


@dataclass
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    ris: RisConfig = field(default_factory=RisConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    equal_power: bool = True
    seed: int | None = None
    workers: int = 1

    def validate(self) -> None:
        for section in (self.system, self.sim, self.ris, self.channel,
                        self.waveform, self.detector, self.sweep):
            section.validate()
        require(self.workers >= 1, "workers must be >= 1")
        max_delay = self.channel.max_delay
        if self.channel.delays is not None and self.channel.delays:
            max_delay = max(int(d) for d in self.channel.delays)
        worst = max_delay * (2 if self.ris.count and self.channel.ris_inbound_paths else 1)
        require(worst < self.waveform.num_symbols,
                f"worst-case path delay {worst} must stay below the frame "
                f"length {self.waveform.num_symbols}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolved_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {
    "system": SystemConfig,
    "sim": SimConfig,
    "ris": RisConfig,
    "channel": ChannelConfig,
    "waveform": WaveformConfig,
    "detector": DetectorConfig,
    "sweep": SweepConfig,
}


def _build_section(cls, data: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"{name}: unknown keys {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a plain dict."""
    require(isinstance(data, dict), "config root must be a JSON object")
    top_known = set(_SECTIONS) | {"equal_power", "seed", "workers"}
    unknown = set(data) - top_known
    if unknown:
        raise ConfigurationError(f"config: unknown top-level keys {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        require(isinstance(section, dict), f"{name}: must be a JSON object")
        kwargs[name] = _build_section(cls, section, name)
    config = ExperimentConfig(
        equal_power=bool(data.get("equal_power", True)),
        seed=data.get("seed"),
        workers=int(data.get("workers", 1)),
        **kwargs,
    )
    config.validate()
    return config


def load_config(path: str | Path, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load a JSON config file, apply --set overrides, and validate."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if overrides:
        raw = apply_overrides(raw, overrides)
    return config_from_dict(raw)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply `section.key=value` strings onto a raw config dict.

    Values are parsed as JSON when possible (numbers, booleans, lists) and
    fall back to bare strings.
    """
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        dotted, value = item.split("=", 1)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        keys = dotted.split(".")
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {item!r} traverses a non-object key")
        node[keys[-1]] = parsed
    return data
