"""Adaptive estimation of the correction parameters from scaled sample pairs.

A linear converter satisfies ``f(alpha * x) = alpha * f(x)``; the nonideal
converter does not.  Feeding each stimulus twice (once scaled by ``alpha``)
gives regression samples ``(delta_y, delta_h)`` whose residual
``delta_y + delta_h . theta`` measures the homogeneity violation of the
corrected output, and driving that residual to zero identifies the per-level
offsets without knowledge of the stimulus itself.

Two iterations are provided: a stochastic-gradient (LMS) step for continuous
operation and a Kaczmarz projection step that annihilates each sample's
residual exactly, useful for a fast initial pass.  The batch least-squares
optimum serves as the reference point for convergence traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .correction import ParameterLayout, ParameterVector, SelectionVector

__all__ = [
    "Estimator",
    "MmseSolution",
    "ConvergenceTrace",
    "mmse_solve",
    "step_size_bound",
    "empirical_step_size_bound",
    "run_calibration",
    "run_two_phase",
]


class Estimator:
    """Sequential estimator of the correction parameters.

    Parameters
    ----------
    layout : ParameterLayout
        Dimensioning of the parameter vector.
    mu : float
        LMS step size (0 freezes the parameters).
    alpha : float
        Pair scaling factor; must differ from 1, which would make every
        sample carry zero information.
    theta : array_like, optional
        Initial parameters (default all zeros, the uncorrected converter).
    """

    def __init__(self, layout: ParameterLayout, mu: float, alpha: float, theta=None):
        if mu < 0:
            raise ValueError("mu must be non-negative")
        if alpha <= 0 or alpha == 1.0:
            raise ValueError("alpha must be positive and different from 1")
        self.layout = layout
        self.mu = mu
        self.alpha = alpha
        self.theta = (
            np.zeros(layout.length)
            if theta is None
            else np.array(theta, dtype=float, copy=True)
        )
        if self.theta.shape != (layout.length,):
            raise ValueError("theta does not match the layout length")
        self.k = 0

    def innovation(self, delta_y: float, delta_h: SelectionVector) -> float:
        return delta_y + delta_h.dot(self.theta)

    def lms_step(self, delta_y: float, delta_h: SelectionVector) -> "Estimator":
        """Gradient step: theta -= mu * delta_h * (delta_y + delta_h . theta).

        Only the entries in the support of ``delta_h`` change.
        """
        if delta_h.length != self.layout.length:
            raise ValueError("sample dimension does not match the layout")
        th = self.theta
        innov = delta_y
        for i, w in zip(delta_h.indices, delta_h.weights):
            innov += w * th[i]
        if not math.isfinite(innov):
            raise ValueError("non-finite sample or state in update")
        scale = self.mu * innov
        for i, w in zip(delta_h.indices, delta_h.weights):
            th[i] -= scale * w
        self.k += 1
        return self

    def kaczmarz_step(self, delta_y: float, delta_h: SelectionVector) -> "Estimator":
        """Projection step that zeroes the current sample's residual exactly.

        A zero-norm sample carries no information and is skipped.
        """
        if delta_h.length != self.layout.length:
            raise ValueError("sample dimension does not match the layout")
        nrm = delta_h.norm_sq()
        self.k += 1
        if nrm == 0.0:
            return self
        th = self.theta
        innov = delta_y
        for i, w in zip(delta_h.indices, delta_h.weights):
            innov += w * th[i]
        if not math.isfinite(innov):
            raise ValueError("non-finite sample or state in update")
        scale = innov / nrm
        for i, w in zip(delta_h.indices, delta_h.weights):
            th[i] -= scale * w
        return self

    def parameters(self) -> ParameterVector:
        return ParameterVector(self.theta.copy(), self.layout)


@dataclass(frozen=True, eq=False)
class MmseSolution:
    """Batch least-squares optimum with its empirical correlations."""

    theta0: ParameterVector
    autocorrelation: np.ndarray
    crosscorrelation: np.ndarray
    sample_count: int


@dataclass
class ConvergenceTrace:
    """Diagnostics recorded every ``record_stride`` samples: the parameter
    distance to the reference solution (when one was supplied) and the
    instantaneous squared residual before the update."""

    error_norms: list[float]
    cost_samples: list[float]
    record_stride: int
    phases: list[int] = field(default_factory=list)

    def steps(self) -> list[int]:
        n = max(len(self.error_norms), len(self.cost_samples))
        return [(i + 1) * self.record_stride for i in range(n)]


def mmse_solve(samples, layout: ParameterLayout) -> MmseSolution:
    """Minimum mean-squared-error parameters for a sample set.

    Accumulates the empirical autocorrelation ``R = mean(dh dh^T)`` and
    cross-correlation ``r = mean(dh dy)`` and returns the minimum-norm
    solution of ``R theta = -r`` (pseudoinverse semantics when levels were
    never exercised and R is rank deficient).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    n = len(samples)
    h = np.zeros((n, layout.length))
    b = np.empty(n)
    for row, (dy, dh) in enumerate(samples):
        if dh.length != layout.length:
            raise ValueError("sample dimension does not match the layout")
        b[row] = dy
        for i, w in zip(dh.indices, dh.weights):
            h[row, i] = w
    autocorr = h.T @ h / n
    crosscorr = h.T @ b / n
    theta0, *_ = np.linalg.lstsq(autocorr, -crosscorr, rcond=None)
    return MmseSolution(
        theta0=ParameterVector(theta0, layout),
        autocorrelation=autocorr,
        crosscorrelation=crosscorr,
        sample_count=n,
    )


def step_size_bound(q: int, alpha: float, extended: bool = False) -> float:
    """Analytic stability bound ``2 / ((1 + alpha^2) * q)``.

    Valid only when the selection entries are pure 0/1 flags; with replaced
    (signal-dependent) entries the bound cannot be stated ahead of time, use
    :func:`empirical_step_size_bound` on a sample scan instead.
    """
    if extended:
        raise ValueError(
            "no analytic step-size bound with replaced selection entries"
        )
    if q < 1 or alpha <= 0:
        raise ValueError("need q >= 1 and alpha > 0")
    return 2.0 / ((1.0 + alpha * alpha) * q)


def empirical_step_size_bound(samples) -> float:
    """Deterministic bound ``2 / max ||delta_h||^2`` over a sample scan."""
    worst = 0.0
    count = 0
    for _, dh in samples:
        count += 1
        worst = max(worst, dh.norm_sq())
    if count == 0 or worst == 0.0:
        raise ValueError("need at least one sample with nonzero regressor")
    return 2.0 / worst


def run_calibration(
    source,
    est: Estimator,
    steps: int,
    oracle: MmseSolution | None = None,
    stride: int = 100,
    step_kind: str = "lms",
) -> tuple[Estimator, ConvergenceTrace]:
    """Drive the estimator over ``steps`` samples from ``source``.

    ``source`` yields ``(delta_y, delta_h)`` samples; diagnostics are
    recorded every ``stride`` steps (distance to ``oracle.theta0`` when an
    oracle is given).  Raises if the stream runs out early.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    if step_kind not in ("lms", "kaczmarz"):
        raise ValueError(f"unknown step kind {step_kind!r}")
    update = est.lms_step if step_kind == "lms" else est.kaczmarz_step
    theta0 = None if oracle is None else oracle.theta0.values
    trace = ConvergenceTrace([], [], stride)
    it = iter(source)
    for k in range(1, steps + 1):
        try:
            delta_y, delta_h = next(it)
        except StopIteration:
            raise RuntimeError(
                f"sample stream exhausted after {k - 1} of {steps} steps"
            ) from None
        record = k % stride == 0
        if record:
            trace.cost_samples.append(est.innovation(delta_y, delta_h) ** 2)
        update(delta_y, delta_h)
        if record and theta0 is not None:
            trace.error_norms.append(float(np.linalg.norm(est.theta - theta0)))
    return est, trace


def run_two_phase(
    sg_source,
    sa_source,
    est: Estimator,
    phase1_steps: int,
    phase2_steps: int,
    duty: float = 1.0,
    oracle: MmseSolution | None = None,
    stride: int = 100,
) -> tuple[Estimator, ConvergenceTrace]:
    """Initial projection pass on a generator stream, then background LMS on
    the application stream.

    Phase 1 applies Kaczmarz steps to every sample of ``sg_source``.  Phase 2
    consumes ``phase2_steps`` samples of ``sa_source`` but applies LMS
    updates only to a deterministic ``duty`` fraction of them (errors drift
    slowly, so not every held sample must be spent on calibration).
    """
    if not 0 < duty <= 1:
        raise ValueError("duty must be in (0, 1]")
    if phase1_steps < 0 or phase2_steps < 0 or phase1_steps + phase2_steps < 1:
        raise ValueError("need a positive total number of steps")
    theta0 = None if oracle is None else oracle.theta0.values
    trace = ConvergenceTrace([], [], stride)
    consumed = 0

    def pull(it, phase):
        try:
            return next(it)
        except StopIteration:
            raise RuntimeError(f"phase {phase} stream exhausted") from None

    it1 = iter(sg_source)
    for _ in range(phase1_steps):
        delta_y, delta_h = pull(it1, 1)
        consumed += 1
        record = consumed % stride == 0
        if record:
            trace.cost_samples.append(est.innovation(delta_y, delta_h) ** 2)
        est.kaczmarz_step(delta_y, delta_h)
        if record:
            trace.phases.append(1)
            if theta0 is not None:
                trace.error_norms.append(float(np.linalg.norm(est.theta - theta0)))

    it2 = iter(sa_source)
    acc = 0.0
    for _ in range(phase2_steps):
        delta_y, delta_h = pull(it2, 2)
        consumed += 1
        record = consumed % stride == 0
        if record:
            trace.cost_samples.append(est.innovation(delta_y, delta_h) ** 2)
        acc += duty
        if acc >= 1.0 - 1e-12:
            acc -= 1.0
            est.lms_step(delta_y, delta_h)
        if record:
            trace.phases.append(2)
            if theta0 is not None:
                trace.error_norms.append(float(np.linalg.norm(est.theta - theta0)))
    return est, trace
