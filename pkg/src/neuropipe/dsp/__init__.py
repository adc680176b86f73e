"""Signal conditioning: filters, resampling, ICA, epoching."""
from .epochs import (Block, Epoch, EpochError, Signal, SkipReport, StimulusEvent,
                     epoch_around_events, epoch_fixed, epoch_samples)
from .filters import (CausalFilter, FilterCoefficients, FilterDesignError, StreamingModeError,
                      apply_filter, design_bandpass, design_notch, freq_response)
from .ica import EogRejection, IcaError, IcaModel, eog_artifact_components, fast_ica, remove_artifact_components
from .resample import ResampleError, StreamingResampler, rational_ratio, resample, resample_causal

__all__ = [
    "Block", "Epoch", "EpochError", "Signal", "SkipReport", "StimulusEvent",
    "epoch_around_events", "epoch_fixed", "epoch_samples",
    "CausalFilter", "FilterCoefficients", "FilterDesignError", "StreamingModeError",
    "apply_filter", "design_bandpass", "design_notch", "freq_response",
    "EogRejection", "IcaError", "IcaModel", "eog_artifact_components", "fast_ica",
    "remove_artifact_components",
    "ResampleError", "StreamingResampler", "rational_ratio", "resample", "resample_causal",
]
