"""Pipelined-ADC behavioral simulation and equalization-based calibration."""

from .adc_model import (
    AdcSpec,
    BatchConversion,
    ConversionRecord,
    NonidealityProfile,
    StageConfig,
    convert,
    convert_batch,
    default_spec,
    output_error_decomposition,
    pipeline_spec,
    quantize_stage,
    random_profile,
    with_dac_step,
    zero_profile,
)
from .calibration import (
    ConvergenceTrace,
    Estimator,
    MmseSolution,
    empirical_step_size_bound,
    mmse_solve,
    run_calibration,
    run_two_phase,
    step_size_bound,
)
from .correction import (
    ParameterLayout,
    ParameterVector,
    SelectionVector,
    apply_correction,
    build_layout,
    build_selection_vector,
    delta_regressor,
    delta_stream,
)
from .metrics import InlCurve, compute_inl, remove_overall_gain, residual_inl
from .signals import PairSource

__version__ = "0.1.0"
