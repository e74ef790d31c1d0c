"""Behavioral model of a pipelined ADC with gain and DAC mismatches.

The converter is a cascade of low-resolution stages followed by a flash
quantizer.  Each stage quantizes the incoming residue with its sub-ADC,
subtracts the reconstructed level and amplifies the remainder for the next
stage.  The digital backend recombines the per-stage levels with the *ideal*
stage gains, so deviations of the analog residue gains (relative errors
``zeta``) or of the per-level DAC reconstruction show up as static errors in
the output.

The model is purely static: no noise, jitter or dynamic settling effects.
All signal arithmetic is double precision; one LSB is
``full_scale / 2**total_bits``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "StageConfig",
    "NonidealityProfile",
    "ConversionRecord",
    "BatchConversion",
    "AdcSpec",
    "uniform_stage",
    "flash_stage",
    "pipeline_spec",
    "default_spec",
    "zero_profile",
    "random_profile",
    "with_dac_step",
    "quantize_stage",
    "convert",
    "convert_batch",
    "output_error_decomposition",
]


def _strictly_increasing(values):
    return all(b > a for a, b in zip(values, values[1:]))


@dataclass(frozen=True)
class StageConfig:
    """Geometry of one converting stage.

    ``level_values`` is the alphabet the stage sub-ADC can emit (full-scale
    units, strictly increasing) and ``thresholds`` are the comparator levels
    separating them (one fewer than the levels).  ``ideal_gain`` is the
    residue gain the digital backend assumes during recombination.
    """

    stage_index: int
    num_levels: int
    ideal_gain: float
    level_values: tuple[float, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        if self.num_levels != len(self.level_values):
            raise ValueError("num_levels does not match level_values")
        if len(self.thresholds) != self.num_levels - 1:
            raise ValueError("need exactly num_levels - 1 thresholds")
        if not _strictly_increasing(self.level_values):
            raise ValueError("level_values must be strictly increasing")
        if not _strictly_increasing(self.thresholds):
            raise ValueError("thresholds must be strictly increasing")

    @cached_property
    def levels_arr(self) -> np.ndarray:
        return np.asarray(self.level_values, dtype=float)

    @cached_property
    def thresholds_arr(self) -> np.ndarray:
        return np.asarray(self.thresholds, dtype=float)

    def max_quant_error(self, input_range: tuple[float, float]) -> float:
        """Largest |input - level| over ``input_range``.

        The quantization error is piecewise linear in the input, so the
        extremes sit at the bin edges (thresholds and range limits).
        """
        lo, hi = input_range
        edges = [lo] + [t for t in self.thresholds if lo < t < hi] + [hi]
        worst = 0.0
        for code, (a, b) in enumerate(zip(edges, edges[1:])):
            lv = self.level_values[code]
            worst = max(worst, abs(a - lv), abs(b - lv))
        return worst


@dataclass(frozen=True)
class AdcSpec:
    """Full converter geometry: converting stages plus the final flash."""

    stages: tuple[StageConfig, ...]
    flash: StageConfig
    total_bits: int
    full_scale: float

    def __post_init__(self):
        if self.full_scale <= 0:
            raise ValueError("full_scale must be positive")
        resolved = self.flash.num_levels * math.prod(
            st.ideal_gain for st in self.stages
        )
        if abs(resolved - 2**self.total_bits) > 1e-9:
            raise ValueError(
                "stage gains and flash levels do not resolve total_bits"
            )
        half = self.full_scale / 2
        for st in self.stages:
            # Redundancy: the amplified residue must stay inside the next
            # stage's conversion range for every in-range input.
            if st.ideal_gain * st.max_quant_error((-half, half)) > half + 1e-12:
                raise ValueError(
                    f"stage {st.stage_index} residue overloads the next stage"
                )

    @property
    def lsb(self) -> float:
        return self.full_scale / 2**self.total_bits

    @property
    def input_range(self) -> tuple[float, float]:
        return (-self.full_scale / 2, self.full_scale / 2)

    @cached_property
    def gain_products(self) -> np.ndarray:
        """Cumulative ideal-gain products ``[1, G1, G1*G2, ...]`` (length n+1)."""
        return np.concatenate(
            ([1.0], np.cumprod([st.ideal_gain for st in self.stages]))
        )


@dataclass(frozen=True)
class NonidealityProfile:
    """Injected stage errors: one relative gain error and one DAC offset per
    output level of every converting stage.  An all-zero profile reproduces
    the ideal converter bit-exactly."""

    relative_gain_errors: tuple[float, ...]
    dac_errors: tuple[tuple[float, ...], ...]
    seed: int | None = None

    @cached_property
    def dac_arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(np.asarray(d, dtype=float) for d in self.dac_errors)

    def is_zero(self) -> bool:
        return all(z == 0.0 for z in self.relative_gain_errors) and all(
            all(e == 0.0 for e in d) for d in self.dac_errors
        )


@dataclass(frozen=True)
class ConversionRecord:
    """Full trace of a single conversion.

    ``stage_codes`` and ``stage_outputs`` include the final flash as their
    last entry; ``residues`` and ``stage_quant_errors`` cover the converting
    stages only.
    """

    x_in: float
    y_x: float
    stage_codes: tuple[int, ...]
    stage_outputs: tuple[float, ...]
    residues: tuple[float, ...]
    stage_quant_errors: tuple[float, ...]
    flash_quant_error: float


@dataclass(frozen=True)
class BatchConversion:
    """Vectorized conversion trace; one row per input sample."""

    x_in: np.ndarray
    y_x: np.ndarray
    stage_codes: np.ndarray
    stage_outputs: np.ndarray
    residues: np.ndarray
    stage_quant_errors: np.ndarray
    flash_quant_error: np.ndarray

    def __len__(self):
        return self.x_in.shape[0]

    def record(self, i: int) -> ConversionRecord:
        return ConversionRecord(
            x_in=float(self.x_in[i]),
            y_x=float(self.y_x[i]),
            stage_codes=tuple(int(c) for c in self.stage_codes[i]),
            stage_outputs=tuple(float(v) for v in self.stage_outputs[i]),
            residues=tuple(float(v) for v in self.residues[i]),
            stage_quant_errors=tuple(float(v) for v in self.stage_quant_errors[i]),
            flash_quant_error=float(self.flash_quant_error[i]),
        )


# ---------------------------------------------------------------------------
# Reference geometry


def uniform_stage(stage_index: int, num_levels: int, full_scale: float) -> StageConfig:
    """Symmetric mid-tread converting stage with midpoint thresholds.

    Levels are spaced ``full_scale / (num_levels + 1)`` apart and the gain is
    ``(num_levels + 1) / 2``, which places the amplified residue exactly
    inside the next stage's range with one level spacing of over-range margin
    at the extremes.  ``num_levels = 7`` gives the classic 2.5-bit stage with
    gain 4.
    """
    if num_levels < 3 or num_levels % 2 == 0:
        raise ValueError("num_levels must be odd and >= 3")
    spacing = full_scale / (num_levels + 1)
    half = (num_levels - 1) // 2
    levels = tuple((k - half) * spacing for k in range(num_levels))
    thresholds = tuple((a + b) / 2 for a, b in zip(levels, levels[1:]))
    return StageConfig(
        stage_index=stage_index,
        num_levels=num_levels,
        ideal_gain=(num_levels + 1) / 2,
        level_values=levels,
        thresholds=thresholds,
    )


def flash_stage(num_levels: int, full_scale: float) -> StageConfig:
    """Uniform mid-tread flash quantizer (gain unused, set to 1)."""
    if num_levels < 2:
        raise ValueError("flash needs at least 2 levels")
    spacing = full_scale / num_levels
    levels = tuple((k - num_levels // 2) * spacing for k in range(num_levels))
    thresholds = tuple((a + b) / 2 for a, b in zip(levels, levels[1:]))
    return StageConfig(
        stage_index=0,
        num_levels=num_levels,
        ideal_gain=1.0,
        level_values=levels,
        thresholds=thresholds,
    )


def pipeline_spec(
    num_stages: int = 5,
    stage_levels: int = 7,
    flash_levels: int = 8,
    full_scale: float = 1.0,
) -> AdcSpec:
    """Converter built from identical uniform stages plus a flash."""
    stages = tuple(
        uniform_stage(i + 1, stage_levels, full_scale) for i in range(num_stages)
    )
    flash = flash_stage(flash_levels, full_scale)
    resolved = flash_levels * math.prod(st.ideal_gain for st in stages)
    bits = round(math.log2(resolved))
    return AdcSpec(stages=stages, flash=flash, total_bits=bits, full_scale=full_scale)


def default_spec(full_scale: float = 1.0) -> AdcSpec:
    """13-bit reference converter: five 2.5-bit stages and a 3-bit flash."""
    return pipeline_spec(5, 7, 8, full_scale)


# ---------------------------------------------------------------------------
# Profiles


def zero_profile(spec: AdcSpec) -> NonidealityProfile:
    return NonidealityProfile(
        relative_gain_errors=tuple(0.0 for _ in spec.stages),
        dac_errors=tuple((0.0,) * st.num_levels for st in spec.stages),
    )


def random_profile(
    spec: AdcSpec,
    gain_lsb_bound: float,
    dac_lsb_bound: float,
    seed: int,
) -> NonidealityProfile:
    """Draw uniform gain and DAC mismatches for every converting stage.

    The uniform widths are chosen so that the worst-case *first-stage*
    contribution to the output equals the given bounds in LSB: the gain-error
    width is ``gain_lsb_bound * lsb`` divided by the stage's largest
    quantization error, and the per-level DAC width is ``dac_lsb_bound * lsb``
    directly.  Every stage draws from the same widths, so contributions of
    later stages shrink by the product of the preceding ideal gains.
    Deterministic for a fixed seed.
    """
    if gain_lsb_bound < 0 or dac_lsb_bound < 0:
        raise ValueError("bounds must be non-negative")
    rng = np.random.default_rng(seed)
    zeta_width = 0.0
    if gain_lsb_bound > 0:
        worst_eq = spec.stages[0].max_quant_error(spec.input_range)
        zeta_width = gain_lsb_bound * spec.lsb / worst_eq
    dac_width = dac_lsb_bound * spec.lsb
    zetas = tuple(float(z) for z in rng.uniform(-zeta_width, zeta_width, len(spec.stages)))
    dac = tuple(
        tuple(float(e) for e in rng.uniform(-dac_width, dac_width, st.num_levels))
        for st in spec.stages
    )
    return NonidealityProfile(relative_gain_errors=zetas, dac_errors=dac, seed=seed)


def with_dac_step(
    profile: NonidealityProfile, stage_index: int, level_index: int, delta: float
) -> NonidealityProfile:
    """Copy of ``profile`` with ``delta`` added to one DAC error (stage 1-based)."""
    dac = [list(d) for d in profile.dac_errors]
    dac[stage_index - 1][level_index] += delta
    return dataclasses.replace(
        profile, dac_errors=tuple(tuple(d) for d in dac)
    )


def _check_profile(spec: AdcSpec, profile: NonidealityProfile):
    if len(profile.relative_gain_errors) != len(spec.stages) or len(
        profile.dac_errors
    ) != len(spec.stages):
        raise ValueError("profile does not match the number of converting stages")
    for st, d in zip(spec.stages, profile.dac_errors):
        if len(d) != st.num_levels:
            raise ValueError(
                f"profile DAC errors for stage {st.stage_index} need "
                f"{st.num_levels} entries"
            )


# ---------------------------------------------------------------------------
# Conversion


def quantize_stage(residue_in: float, stage: StageConfig) -> tuple[int, float]:
    """Sub-ADC decision: code is the count of thresholds strictly below the
    input, saturating at the extreme codes for out-of-range inputs."""
    code = int(np.searchsorted(stage.thresholds_arr, residue_in, side="left"))
    return code, stage.level_values[code]


def convert_batch(x_in, spec: AdcSpec, profile: NonidealityProfile) -> BatchConversion:
    """Convert an array of inputs through the nonideal cascade.

    The analog residue path uses the *real* gains ``G*(1+zeta)`` and
    subtracts the per-level DAC errors; the output recombination uses the
    ideal gains only.
    """
    _check_profile(spec, profile)
    x = np.atleast_1d(np.asarray(x_in, dtype=float))
    n = len(spec.stages)
    m = x.shape[0]
    codes = np.empty((m, n + 1), dtype=np.int64)
    outputs = np.empty((m, n + 1))
    residues = np.empty((m, n))
    quant_errors = np.empty((m, n))

    r = x
    for i, st in enumerate(spec.stages):
        c = np.searchsorted(st.thresholds_arr, r, side="left")
        lv = st.levels_arr[c]
        eq = r - lv
        real_gain = st.ideal_gain * (1.0 + profile.relative_gain_errors[i])
        r = real_gain * (eq - profile.dac_arrays[i][c])
        codes[:, i] = c
        outputs[:, i] = lv
        quant_errors[:, i] = eq
        residues[:, i] = r

    fc = np.searchsorted(spec.flash.thresholds_arr, r, side="left")
    flv = spec.flash.levels_arr[fc]
    codes[:, n] = fc
    outputs[:, n] = flv
    flash_eq = r - flv

    y = outputs @ (1.0 / spec.gain_products)
    return BatchConversion(
        x_in=x,
        y_x=y,
        stage_codes=codes,
        stage_outputs=outputs,
        residues=residues,
        stage_quant_errors=quant_errors,
        flash_quant_error=flash_eq,
    )


def convert(x_in: float, spec: AdcSpec, profile: NonidealityProfile) -> ConversionRecord:
    """Convert a single input and return the full per-stage trace."""
    return convert_batch([x_in], spec, profile).record(0)


def output_error_decomposition(
    record: ConversionRecord, spec: AdcSpec, profile: NonidealityProfile
) -> np.ndarray:
    """Additive error terms of one conversion.

    Returns ``[gain_1, dac_1, gain_2, dac_2, ..., flash]`` where
    ``gain_i = zeta_i * eq_i / P_(i-1)`` and
    ``dac_i = -(1 + zeta_i) * e_dac_i / P_(i-1)`` with ``P`` the cumulative
    ideal-gain products.  The terms plus ``x_in`` reproduce ``y_x`` to
    machine precision.
    """
    _check_profile(spec, profile)
    n = len(spec.stages)
    if len(record.stage_codes) != n + 1:
        raise ValueError("record does not match the converter geometry")
    prods = spec.gain_products
    terms = np.empty(2 * n + 1)
    for i in range(n):
        zeta = profile.relative_gain_errors[i]
        dac = profile.dac_errors[i][record.stage_codes[i]]
        terms[2 * i] = zeta * record.stage_quant_errors[i] / prods[i]
        terms[2 * i + 1] = -(1.0 + zeta) * dac / prods[i]
    terms[2 * n] = -record.flash_quant_error / prods[n]
    return terms
