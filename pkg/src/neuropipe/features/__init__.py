"""Feature extraction (spectral, temporal, PERCLOS) and selection (correlation, PCA)."""
from .assemble import FEATURE_KINDS, FeatureError, FeatureSpec, FeatureVector, assemble_features, feature_matrix_csv
from .selection import PcaModel, SelectionError, correlation_prune, pca_fit, pca_inverse, pca_transform
from .spectral import BANDS, Psd, SpectralError, band_power, resolve_band, spectral_entropy, stft_band_stats, welch_psd
from .temporal import STATS, TemporalError, excess_kurtosis, hjorth, perclos, time_stats

__all__ = [
    "FEATURE_KINDS", "FeatureError", "FeatureSpec", "FeatureVector", "assemble_features", "feature_matrix_csv",
    "PcaModel", "SelectionError", "correlation_prune", "pca_fit", "pca_inverse", "pca_transform",
    "BANDS", "Psd", "SpectralError", "band_power", "resolve_band", "spectral_entropy", "stft_band_stats",
    "welch_psd", "STATS", "TemporalError", "excess_kurtosis", "hjorth", "perclos", "time_stats",
]
