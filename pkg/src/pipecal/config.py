"""Experiment configuration: flat key-value files with dotted section names.

Every key has a default matching the reference experiment (13-bit converter,
five 2.5-bit stages plus a 3-bit flash, uniform mismatches with 25/15 LSB
worst-case first-stage contributions, alpha 0.5, q 3, mu 0.2, full-scale
10.77 MHz sine sampled at 100 MHz).  Unknown keys are rejected.  All
randomness flows from the single master ``seed`` through named sub-seeds so
profile and signal draws can be varied independently.
"""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field

from . import adc_model, correction, signals

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "validate_config",
    "derive_seed",
    "build_spec",
    "build_profile",
    "build_correction_layout",
    "build_source",
]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def derive_seed(master: int, name: str) -> int:
    """Stable 32-bit sub-seed for a named random stream."""
    return zlib.crc32(f"{master}:{name}".encode())


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.replace(",", " ").split()]


def _float_lists(text: str) -> list[list[float]]:
    return [_float_list(group) for group in text.split(";")]


@dataclass
class ExperimentConfig:
    seed: int = 1
    outputs_dir: str = "out"

    adc_pipeline_stages: int = 5
    adc_stage_levels: int = 7
    adc_flash_levels: int = 8
    adc_total_bits: int = 13
    adc_full_scale: float = 1.0

    profile_gain_bound_lsb: float = 25.0
    profile_dac_bound_lsb: float = 15.0
    profile_seed: int | None = None
    profile_gain_errors: list[float] | None = None
    profile_dac_errors: list[list[float]] | None = None

    signal_kind: str = "sine"
    signal_amplitude: float = 0.5
    signal_frequency_hz: float = 10.77e6
    signal_sample_rate_hz: float = 100e6
    signal_phase: float = 0.0

    calibration_q: int = 3
    calibration_alpha: float = 0.5
    calibration_mode: str = "plain"
    calibration_mu: float = 0.2
    calibration_mu_list: list[float] = field(default_factory=lambda: [0.05, 0.2, 0.4])
    calibration_steps: int = 30000
    calibration_stride: int = 100
    calibration_estimator: str = "sgd"
    calibration_duty: float = 1.0
    calibration_oracle_pairs: int = 100000
    calibration_bound_scan: int = 20000

    inl_grid_points: int = 65536

    twophase_phase1_steps: int = 5000
    twophase_phase2_steps: int = 25000
    twophase_drift_lsb: float = 0.0
    twophase_drift_stage: int = 1
    twophase_drift_level: int = 5
    twophase_drift_at: float = 0.5


_KEYS = {
    "seed": ("seed", int),
    "outputs.dir": ("outputs_dir", str),
    "adc.pipeline_stages": ("adc_pipeline_stages", int),
    "adc.stage_levels": ("adc_stage_levels", int),
    "adc.flash_levels": ("adc_flash_levels", int),
    "adc.total_bits": ("adc_total_bits", int),
    "adc.full_scale": ("adc_full_scale", float),
    "profile.gain_bound_lsb": ("profile_gain_bound_lsb", float),
    "profile.dac_bound_lsb": ("profile_dac_bound_lsb", float),
    "profile.seed": ("profile_seed", int),
    "profile.gain_errors": ("profile_gain_errors", _float_list),
    "profile.dac_errors": ("profile_dac_errors", _float_lists),
    "signal.kind": ("signal_kind", str),
    "signal.amplitude": ("signal_amplitude", float),
    "signal.frequency_hz": ("signal_frequency_hz", float),
    "signal.sample_rate_hz": ("signal_sample_rate_hz", float),
    "signal.phase": ("signal_phase", float),
    "calibration.q": ("calibration_q", int),
    "calibration.alpha": ("calibration_alpha", float),
    "calibration.mode": ("calibration_mode", str),
    "calibration.mu": ("calibration_mu", float),
    "calibration.mu_list": ("calibration_mu_list", _float_list),
    "calibration.steps": ("calibration_steps", int),
    "calibration.stride": ("calibration_stride", int),
    "calibration.estimator": ("calibration_estimator", str),
    "calibration.duty": ("calibration_duty", float),
    "calibration.oracle_pairs": ("calibration_oracle_pairs", int),
    "calibration.bound_scan": ("calibration_bound_scan", int),
    "inl.grid_points": ("inl_grid_points", int),
    "twophase.phase1_steps": ("twophase_phase1_steps", int),
    "twophase.phase2_steps": ("twophase_phase2_steps", int),
    "twophase.drift_lsb": ("twophase_drift_lsb", float),
    "twophase.drift_stage": ("twophase_drift_stage", int),
    "twophase.drift_level": ("twophase_drift_level", int),
    "twophase.drift_at": ("twophase_drift_at", float),
}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        attr, cast = _KEYS[key]
        try:
            setattr(cfg, attr, cast(value))
        except (ValueError, TypeError):
            raise ConfigError(f"invalid value for {key!r}: {value!r}") from None
    return cfg


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def validate_config(cfg: ExperimentConfig) -> None:
    """Cross-field checks; raises ConfigError naming the offending key."""

    def require(ok, key, why):
        if not ok:
            raise ConfigError(f"{key}: {why}")

    require(cfg.adc_pipeline_stages >= 1, "adc.pipeline_stages", "need at least one stage")
    require(cfg.adc_full_scale > 0, "adc.full_scale", "must be positive")
    try:
        spec = build_spec(cfg)
    except ValueError as exc:
        raise ConfigError(f"adc.*: {exc}") from None
    require(
        spec.total_bits == cfg.adc_total_bits,
        "adc.total_bits",
        f"geometry resolves {spec.total_bits} bits",
    )
    require(cfg.profile_gain_bound_lsb >= 0, "profile.gain_bound_lsb", "must be >= 0")
    require(cfg.profile_dac_bound_lsb >= 0, "profile.dac_bound_lsb", "must be >= 0")
    if cfg.profile_gain_errors is not None:
        require(
            len(cfg.profile_gain_errors) == len(spec.stages),
            "profile.gain_errors",
            f"need {len(spec.stages)} entries",
        )
    if cfg.profile_dac_errors is not None:
        require(
            len(cfg.profile_dac_errors) == len(spec.stages)
            and all(
                len(d) == st.num_levels
                for st, d in zip(spec.stages, cfg.profile_dac_errors)
            ),
            "profile.dac_errors",
            "per-stage lists must match the stage level counts",
        )
    require(cfg.signal_kind in signals.KINDS, "signal.kind", f"one of {signals.KINDS}")
    require(
        abs(cfg.signal_amplitude) <= cfg.adc_full_scale / 2,
        "signal.amplitude",
        "exceeds half the full-scale range",
    )
    require(cfg.signal_sample_rate_hz > 0, "signal.sample_rate_hz", "must be positive")
    require(
        1 <= cfg.calibration_q <= cfg.adc_pipeline_stages,
        "calibration.q",
        f"must be between 1 and {cfg.adc_pipeline_stages}",
    )
    require(
        cfg.calibration_alpha > 0 and cfg.calibration_alpha != 1.0,
        "calibration.alpha",
        "must be positive and different from 1 (a unit scaling carries no information)",
    )
    require(
        cfg.calibration_mode in ("plain", "extended"),
        "calibration.mode",
        "one of plain, extended",
    )
    require(cfg.calibration_mu >= 0, "calibration.mu", "must be >= 0")
    require(
        bool(cfg.calibration_mu_list)
        and all(m >= 0 for m in cfg.calibration_mu_list),
        "calibration.mu_list",
        "need a non-empty list of step sizes >= 0",
    )
    require(cfg.calibration_steps >= 1, "calibration.steps", "must be at least 1")
    require(cfg.calibration_stride >= 1, "calibration.stride", "must be at least 1")
    require(
        cfg.calibration_estimator in ("sgd", "als", "two-phase"),
        "calibration.estimator",
        "one of sgd, als, two-phase",
    )
    require(0 < cfg.calibration_duty <= 1, "calibration.duty", "must be in (0, 1]")
    require(cfg.calibration_oracle_pairs >= 1, "calibration.oracle_pairs", "must be >= 1")
    require(cfg.calibration_bound_scan >= 1, "calibration.bound_scan", "must be >= 1")
    require(
        cfg.inl_grid_points >= 4 * 2**cfg.adc_total_bits,
        "inl.grid_points",
        "need at least 4 points per code",
    )
    require(cfg.twophase_phase1_steps >= 0, "twophase.phase1_steps", "must be >= 0")
    require(cfg.twophase_phase2_steps >= 1, "twophase.phase2_steps", "must be >= 1")
    require(
        1 <= cfg.twophase_drift_stage <= cfg.adc_pipeline_stages,
        "twophase.drift_stage",
        "not a converting stage",
    )
    require(
        0 <= cfg.twophase_drift_level < cfg.adc_stage_levels,
        "twophase.drift_level",
        "not a stage level index",
    )
    require(0 < cfg.twophase_drift_at < 1, "twophase.drift_at", "must be in (0, 1)")


# ---------------------------------------------------------------------------
# Builders


def build_spec(cfg: ExperimentConfig) -> adc_model.AdcSpec:
    return adc_model.pipeline_spec(
        num_stages=cfg.adc_pipeline_stages,
        stage_levels=cfg.adc_stage_levels,
        flash_levels=cfg.adc_flash_levels,
        full_scale=cfg.adc_full_scale,
    )


def build_profile(cfg: ExperimentConfig, spec: adc_model.AdcSpec) -> adc_model.NonidealityProfile:
    if cfg.profile_gain_errors is not None or cfg.profile_dac_errors is not None:
        gains = cfg.profile_gain_errors or [0.0] * len(spec.stages)
        dac = cfg.profile_dac_errors or [[0.0] * st.num_levels for st in spec.stages]
        return adc_model.NonidealityProfile(
            relative_gain_errors=tuple(gains),
            dac_errors=tuple(tuple(d) for d in dac),
        )
    seed = cfg.profile_seed
    if seed is None:
        seed = derive_seed(cfg.seed, "profile")
    return adc_model.random_profile(
        spec, cfg.profile_gain_bound_lsb, cfg.profile_dac_bound_lsb, seed
    )


def build_correction_layout(cfg: ExperimentConfig, spec: adc_model.AdcSpec) -> correction.ParameterLayout:
    return correction.build_layout(
        spec, cfg.calibration_q, extended=cfg.calibration_mode == "extended"
    )


def build_source(cfg: ExperimentConfig, role: str = "signal") -> signals.PairSource:
    """Pair source for a named role; held-out roles get an independent phase
    and seed derived from the master seed."""
    seed = derive_seed(cfg.seed, f"signal:{role}")
    phase = cfg.signal_phase
    if role != "signal":
        phase += 2 * 3.141592653589793 * (derive_seed(cfg.seed, f"phase:{role}") / 2**32)
    kind = cfg.signal_kind
    app_waveform = "sine"
    if role == "application":
        app_waveform = cfg.signal_kind if cfg.signal_kind != "application" else "sine"
        kind = "application"
    return signals.PairSource(
        kind=kind,
        amplitude=cfg.signal_amplitude,
        alpha=cfg.calibration_alpha,
        frequency=cfg.signal_frequency_hz,
        sample_rate=cfg.signal_sample_rate_hz,
        seed=seed,
        phase=phase,
        full_scale=cfg.adc_full_scale,
        app_waveform=app_waveform,
    )


def describe(cfg: ExperimentConfig) -> str:
    """Canonical one-key-per-line rendering of the configuration."""
    lines = []
    for key, (attr, _) in _KEYS.items():
        value = getattr(cfg, attr)
        if value is None:
            continue
        if isinstance(value, list):
            if value and isinstance(value[0], list):
                value = "; ".join(", ".join(f"{v:g}" for v in grp) for grp in value)
            else:
                value = ", ".join(f"{v:g}" for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    return dataclasses.replace(cfg, **kwargs)
