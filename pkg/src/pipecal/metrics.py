"""Linearity metrics of the (optionally corrected) converter.

INL is measured with an oversampled input ramp: for every sample the output
error is taken as output minus input minus the flash quantization term read
from the conversion trace, then averaged per output code and expressed in
LSB.  Codes that the ramp never produced (missing codes are a real failure
mode here) are kept in the curve as NaN with a zero hit count rather than
silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adc_model import AdcSpec, NonidealityProfile, convert_batch
from .correction import ParameterVector, correction_values

__all__ = ["InlCurve", "compute_inl", "remove_overall_gain", "residual_inl"]


@dataclass(frozen=True, eq=False)
class InlCurve:
    """Per-code INL in LSB over the full output code axis."""

    codes: np.ndarray
    inl_lsb: np.ndarray
    hits: np.ndarray
    gain_removed: bool

    def __post_init__(self):
        if not (len(self.codes) == len(self.inl_lsb) == len(self.hits)):
            raise ValueError("curve arrays differ in length")

    def valid(self) -> np.ndarray:
        return np.isfinite(self.inl_lsb)

    def max_abs(self) -> float:
        v = self.valid()
        if not v.any():
            return float("nan")
        return float(np.max(np.abs(self.inl_lsb[v])))


def compute_inl(
    spec: AdcSpec,
    profile: NonidealityProfile,
    theta: ParameterVector | None = None,
    grid_points: int | None = None,
) -> InlCurve:
    """INL of the converter under ``profile``, corrected by ``theta`` if given.

    The ramp must oversample the code axis by at least 4x so that every
    reachable code collects several samples.
    """
    total_codes = 2**spec.total_bits
    if grid_points is None:
        grid_points = 8 * total_codes
    if grid_points < 4 * total_codes:
        raise ValueError("grid too coarse: need at least 4 points per code")
    half = spec.full_scale / 2
    x = np.linspace(-half, half, grid_points)
    batch = convert_batch(x, spec, profile)
    flash_term = -batch.flash_quant_error / spec.gain_products[-1]
    err = batch.y_x - x - flash_term
    if theta is not None:
        err = err + correction_values(batch, theta, spec)
    code = np.rint((batch.y_x + half) / spec.lsb).astype(np.int64)
    np.clip(code, 0, total_codes - 1, out=code)
    sums = np.zeros(total_codes)
    hits = np.zeros(total_codes, dtype=np.int64)
    np.add.at(sums, code, err)
    np.add.at(hits, code, 1)
    inl = np.full(total_codes, np.nan)
    seen = hits > 0
    inl[seen] = sums[seen] / hits[seen] / spec.lsb
    return InlCurve(
        codes=np.arange(total_codes),
        inl_lsb=inl,
        hits=hits,
        gain_removed=False,
    )


def remove_overall_gain(curve: InlCurve) -> InlCurve:
    """Subtract the least-squares straight line (gain and offset) from the
    curve; the correction model leaves an overall gain error behind which
    carries no linearity information."""
    mask = curve.valid()
    inl = curve.inl_lsb.copy()
    if mask.sum() >= 2:
        slope, intercept = np.polyfit(curve.codes[mask], curve.inl_lsb[mask], 1)
        inl = inl - (slope * curve.codes + intercept)
    return InlCurve(
        codes=curve.codes.copy(),
        inl_lsb=inl,
        hits=curve.hits.copy(),
        gain_removed=True,
    )


def residual_inl(true_curve: InlCurve, estimated_curve: InlCurve) -> InlCurve:
    """Pointwise difference of two curves over matching code axes."""
    if not np.array_equal(true_curve.codes, estimated_curve.codes):
        raise ValueError("curves have different code axes")
    return InlCurve(
        codes=true_curve.codes.copy(),
        inl_lsb=true_curve.inl_lsb - estimated_curve.inl_lsb,
        hits=np.minimum(true_curve.hits, estimated_curve.hits),
        gain_removed=true_curve.gain_removed and estimated_curve.gain_removed,
    )
