"""Test-signal sources emitting (x, alpha*x) input pairs.

A source produces the raw stimulus; the scaled copy is exact by construction
(the scaling models an ideal voltage divider).  The ``application`` kind
models a sample-and-hold replay of the running application signal: each held
sample costs two conversion slots, so the source advances through the
underlying waveform at half the sample rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["PairSource"]

WAVEFORMS = ("sine", "ramp", "uniform_random")
KINDS = WAVEFORMS + ("application",)


@dataclass
class PairSource:
    """Sequential generator of scaled input pairs.

    Amplitude is in full-scale units (peak, at most ``full_scale / 2``);
    ``frequency`` and ``sample_rate`` shape the sine and ramp waveforms;
    ``seed`` drives the uniform-random kind; ``phase`` is the initial sine
    phase in radians.
    """

    kind: str
    amplitude: float
    alpha: float
    frequency: float = 10.77e6
    sample_rate: float = 100e6
    seed: int = 0
    phase: float = 0.0
    full_scale: float = 1.0
    app_waveform: str = "sine"
    _n: int = field(default=0, repr=False)
    _rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "application" and self.app_waveform not in WAVEFORMS:
            raise ValueError(f"unknown application waveform {self.app_waveform!r}")
        if abs(self.amplitude) > self.full_scale / 2:
            raise ValueError("amplitude exceeds half the full-scale range")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self._rng = np.random.default_rng(self.seed)

    @property
    def _waveform(self) -> str:
        return self.app_waveform if self.kind == "application" else self.kind

    @property
    def _step(self) -> int:
        # Held replay consumes two conversion slots per emitted pair.
        return 2 if self.kind == "application" else 1

    def next_pair(self) -> tuple[float, float]:
        """Emit one (x, alpha*x) pair and advance the source."""
        wf = self._waveform
        k = self._n * self._step
        if wf == "sine":
            x = self.amplitude * math.sin(
                2 * math.pi * self.frequency * k / self.sample_rate + self.phase
            )
        elif wf == "ramp":
            frac = (k * self.frequency / self.sample_rate) % 1.0
            x = self.amplitude * (2.0 * frac - 1.0)
        else:
            x = float(self._rng.uniform(-self.amplitude, self.amplitude))
        self._n += 1
        return x, self.alpha * x

    def pairs(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized batch of ``count`` pairs (same stream as next_pair)."""
        wf = self._waveform
        k = (self._n + np.arange(count)) * self._step
        if wf == "sine":
            x = self.amplitude * np.sin(
                2 * np.pi * self.frequency * k / self.sample_rate + self.phase
            )
        elif wf == "ramp":
            frac = (k * self.frequency / self.sample_rate) % 1.0
            x = self.amplitude * (2.0 * frac - 1.0)
        else:
            x = self._rng.uniform(-self.amplitude, self.amplitude, count)
        self._n += count
        return x, self.alpha * x
