"""Post-correction of the converter output with per-level offset parameters.

Each output level of the calibrated stages owns one additive offset; a sparse
selection vector marks which offsets contribute to a given conversion and the
corrected output is ``y + h . theta``.  Offsets of consecutive stages are
linearly dependent, so one redundant entry (the lowest output level) is
dropped from each calibrated stage except the last, leaving
``p - (q - 1)`` parameters for ``q`` stages with ``p`` levels in total.

In *extended* mode the entry of the highest output level of every calibrated
stage is repurposed: instead of a 0/1 flag it carries the running ideal
recombination of the stage outputs (``z_1 = xs_1``,
``z_j = G_(j-1) * z_(j-1) + xs_j``) on every conversion, so that single
parameter acts on all levels of its stage like a gain trim.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .adc_model import AdcSpec, BatchConversion, ConversionRecord, NonidealityProfile, convert_batch

__all__ = [
    "ParameterLayout",
    "ParameterVector",
    "SelectionVector",
    "build_layout",
    "build_selection_vector",
    "apply_correction",
    "delta_regressor",
    "delta_stream",
    "selection_matrix",
    "correction_values",
]

# Generated pairs are exact scalings; anything further off is a caller bug.
_PAIR_SCALING_TOL = 1e-9


@dataclass(frozen=True)
class ParameterLayout:
    """Dense indexing of the correction parameters.

    ``excluded_index_per_stage`` holds the dropped (redundant) level per
    stage, ``None`` where nothing is dropped; ``replaced_index_per_stage``
    holds the level whose entry carries the running recombination in extended
    mode, ``None`` everywhere in plain mode.
    """

    q: int
    levels_per_stage: tuple[int, ...]
    excluded_index_per_stage: tuple[int | None, ...]
    replaced_index_per_stage: tuple[int | None, ...]
    length: int

    @property
    def extended(self) -> bool:
        return any(r is not None for r in self.replaced_index_per_stage)

    @cached_property
    def stage_offsets(self) -> tuple[int, ...]:
        offs = []
        pos = 0
        for levels, excl in zip(self.levels_per_stage, self.excluded_index_per_stage):
            offs.append(pos)
            pos += levels - (0 if excl is None else 1)
        return tuple(offs)

    def dense_index(self, stage: int, level: int) -> int | None:
        """Dense parameter index of ``(stage, level)`` (0-based stage among
        the calibrated ones); ``None`` for the excluded level."""
        excl = self.excluded_index_per_stage[stage]
        if level == excl:
            return None
        shift = 1 if excl is not None and level > excl else 0
        return self.stage_offsets[stage] + level - shift

    @cached_property
    def active_maps(self) -> tuple[tuple[int, ...], ...]:
        """Per stage: level code -> dense index of its 0/1 entry, -1 where the
        level writes no flag (excluded, or replaced in extended mode)."""
        maps = []
        for j, levels in enumerate(self.levels_per_stage):
            row = []
            for code in range(levels):
                idx = self.dense_index(j, code)
                if idx is None or code == self.replaced_index_per_stage[j]:
                    row.append(-1)
                else:
                    row.append(idx)
            maps.append(tuple(row))
        return tuple(maps)

    @cached_property
    def replacement_slots(self) -> tuple[int | None, ...]:
        return tuple(
            None if r is None else self.dense_index(j, r)
            for j, r in enumerate(self.replaced_index_per_stage)
        )


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Correction parameters (full-scale units) dimensioned by a layout."""

    values: np.ndarray
    layout: ParameterLayout

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.layout.length,):
            raise ValueError("parameter vector does not match its layout")
        if not np.all(np.isfinite(v)):
            raise ValueError("parameter vector must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, layout: ParameterLayout) -> "ParameterVector":
        return cls(np.zeros(layout.length), layout)


@dataclass(frozen=True)
class SelectionVector:
    """Sparse regressor row: sorted unique indices with their weights."""

    indices: tuple[int, ...]
    weights: tuple[float, ...]
    length: int

    def __post_init__(self):
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights differ in length")

    def dot(self, values) -> float:
        acc = 0.0
        for i, w in zip(self.indices, self.weights):
            acc += w * values[i]
        return acc

    def norm_sq(self) -> float:
        return sum(w * w for w in self.weights)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.length)
        for i, w in zip(self.indices, self.weights):
            out[i] = w
        return out


def _from_entries(entries: dict, length: int) -> SelectionVector:
    items = sorted((i, w) for i, w in entries.items() if w != 0.0)
    return SelectionVector(
        indices=tuple(i for i, _ in items),
        weights=tuple(w for _, w in items),
        length=length,
    )


def build_layout(spec: AdcSpec, q: int, extended: bool = False) -> ParameterLayout:
    """Parameter layout for the ``q`` most significant stages of ``spec``."""
    if not 1 <= q <= len(spec.stages):
        raise ValueError(f"q must be between 1 and {len(spec.stages)}")
    levels = tuple(st.num_levels for st in spec.stages[:q])
    excluded = tuple(0 if j < q - 1 else None for j in range(q))
    replaced = tuple((levels[j] - 1) if extended else None for j in range(q))
    length = sum(levels) - (q - 1)
    return ParameterLayout(
        q=q,
        levels_per_stage=levels,
        excluded_index_per_stage=excluded,
        replaced_index_per_stage=replaced,
        length=length,
    )


def _running_recombination(stage_outputs, gains, q):
    """z_1 = xs_1, z_j = G_(j-1) * z_(j-1) + xs_j for the first q stages."""
    zs = []
    z = None
    for j in range(q):
        z = stage_outputs[j] if j == 0 else gains[j - 1] * z + stage_outputs[j]
        zs.append(z)
    return zs


def build_selection_vector(
    record: ConversionRecord, layout: ParameterLayout, spec: AdcSpec
) -> SelectionVector:
    """Selection vector of one conversion: 1 at the active level of each
    calibrated stage (excluded levels contribute nothing); in extended mode
    the replacement slots carry the running recombination instead."""
    if len(record.stage_codes) < layout.q:
        raise ValueError("record covers fewer stages than the layout")
    entries: dict[int, float] = {}
    for j in range(layout.q):
        idx = layout.active_maps[j][record.stage_codes[j]]
        if idx >= 0:
            entries[idx] = entries.get(idx, 0.0) + 1.0
    if layout.extended:
        gains = [st.ideal_gain for st in spec.stages]
        zs = _running_recombination(record.stage_outputs, gains, layout.q)
        for j, slot in enumerate(layout.replacement_slots):
            entries[slot] = entries.get(slot, 0.0) + zs[j]
    return _from_entries(entries, layout.length)


def apply_correction(y: float, h: SelectionVector, theta: ParameterVector) -> float:
    """Post-corrected output ``y + h . theta``."""
    if h.length != theta.layout.length:
        raise ValueError("selection vector and parameters differ in dimension")
    return y + h.dot(theta.values)


def delta_regressor(
    pair: tuple[ConversionRecord, ConversionRecord],
    alpha: float,
    layout: ParameterLayout,
    spec: AdcSpec,
) -> tuple[float, SelectionVector]:
    """Reduce a scaled measurement pair to the regression sample
    ``delta_y = y_ax - alpha * y_x`` and
    ``delta_h = h_ax - alpha * h_x`` (sparse, merged by index)."""
    rec_x, rec_ax = pair
    if abs(rec_ax.x_in - alpha * rec_x.x_in) > _PAIR_SCALING_TOL * spec.full_scale:
        raise ValueError("pair inputs are not related by the scaling factor")
    delta_y = rec_ax.y_x - alpha * rec_x.y_x
    h_x = build_selection_vector(rec_x, layout, spec)
    h_ax = build_selection_vector(rec_ax, layout, spec)
    entries: dict[int, float] = {}
    for i, w in zip(h_ax.indices, h_ax.weights):
        entries[i] = entries.get(i, 0.0) + w
    for i, w in zip(h_x.indices, h_x.weights):
        entries[i] = entries.get(i, 0.0) - alpha * w
    return delta_y, _from_entries(entries, layout.length)


# ---------------------------------------------------------------------------
# Batch helpers


def selection_matrix(
    batch: BatchConversion, layout: ParameterLayout, spec: AdcSpec
) -> np.ndarray:
    """Dense selection matrix, one row per conversion in ``batch``."""
    m = len(batch)
    out = np.zeros((m, layout.length))
    rows = np.arange(m)
    for j in range(layout.q):
        amap = np.asarray(layout.active_maps[j])
        idx = amap[batch.stage_codes[:, j]]
        active = idx >= 0
        out[rows[active], idx[active]] = 1.0
    if layout.extended:
        z = None
        for j, slot in enumerate(layout.replacement_slots):
            xs = batch.stage_outputs[:, j]
            z = xs if j == 0 else spec.stages[j - 1].ideal_gain * z + xs
            out[:, slot] += z
    return out


def correction_values(
    batch: BatchConversion, theta: ParameterVector, spec: AdcSpec
) -> np.ndarray:
    """Per-row correction ``h . theta`` for a conversion batch."""
    layout = theta.layout
    vals = np.zeros(len(batch))
    for j in range(layout.q):
        amap = np.asarray(layout.active_maps[j])
        idx = amap[batch.stage_codes[:, j]]
        active = idx >= 0
        vals[active] += theta.values[idx[active]]
    if layout.extended:
        z = None
        for j, slot in enumerate(layout.replacement_slots):
            xs = batch.stage_outputs[:, j]
            z = xs if j == 0 else spec.stages[j - 1].ideal_gain * z + xs
            vals += theta.values[slot] * z
    return vals


def delta_stream(
    source,
    spec: AdcSpec,
    profile: NonidealityProfile,
    layout: ParameterLayout,
    chunk_size: int = 4096,
):
    """Endless generator of ``(delta_y, delta_h)`` samples from a pair source.

    Conversions run vectorized in chunks; the per-sample sparse assembly uses
    plain Python containers to keep the estimator loop fast.
    """
    alpha = source.alpha
    q = layout.q
    amaps = [list(m) for m in layout.active_maps]
    slots = list(layout.replacement_slots)
    gains = [st.ideal_gain for st in spec.stages]
    length = layout.length
    extended = layout.extended
    while True:
        xs, axs = source.pairs(chunk_size)
        bx = convert_batch(xs, spec, profile)
        ba = convert_batch(axs, spec, profile)
        dy = (ba.y_x - alpha * bx.y_x).tolist()
        cx = bx.stage_codes[:, :q].tolist()
        ca = ba.stage_codes[:, :q].tolist()
        if extended:
            zx = np.empty((chunk_size, q))
            za = np.empty((chunk_size, q))
            accx = acca = None
            for j in range(q):
                if j == 0:
                    accx = bx.stage_outputs[:, 0]
                    acca = ba.stage_outputs[:, 0]
                else:
                    accx = gains[j - 1] * accx + bx.stage_outputs[:, j]
                    acca = gains[j - 1] * acca + ba.stage_outputs[:, j]
                zx[:, j] = accx
                za[:, j] = acca
            zx = zx.tolist()
            za = za.tolist()
        for i in range(chunk_size):
            entries: dict[int, float] = {}
            codes_x = cx[i]
            codes_a = ca[i]
            for j in range(q):
                ia = amaps[j][codes_a[j]]
                if ia >= 0:
                    entries[ia] = entries.get(ia, 0.0) + 1.0
                ix = amaps[j][codes_x[j]]
                if ix >= 0:
                    entries[ix] = entries.get(ix, 0.0) - alpha
            if extended:
                zxi = zx[i]
                zai = za[i]
                for j in range(q):
                    slot = slots[j]
                    entries[slot] = entries.get(slot, 0.0) + zai[j] - alpha * zxi[j]
            yield dy[i], _from_entries(entries, length)
