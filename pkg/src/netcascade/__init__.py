"""Real-time malicious-traffic detection for mixed IoT/traditional networks.

The pipeline: classic-pcap captures are merged at flow boundaries into one
labeled stream, per-packet and per-window features are extracted over fixed
1-second intervals, and packets are classified by a lightweight online model
(M1) that escalates low-confidence decisions to a heavier model (M2) and,
past that, to a human analyst.  Every label that comes back from a higher
level retrains M1 through weight interpolation so it adapts without
forgetting.
"""

from netcascade.capture import (
    CaptureError,
    CaptureHeader,
    CaptureReader,
    FiveTuple,
    PacketRecord,
    TrafficClass,
    five_tuple_of,
    general_features,
    parse_capture,
)
from netcascade.features import (
    FeatureVector,
    ScalerParams,
    WindowConfig,
    WindowStats,
    apply_scaler,
    assemble,
    compute_window_stats,
    entropy,
    fit_scaler,
    window_id,
)
from netcascade.models import (
    BayesModel,
    EvalReport,
    LinearModel,
    Prediction,
    evaluate,
    interpolate,
    kmeans_select,
)

__all__ = [
    "BayesModel",
    "CaptureError",
    "CaptureHeader",
    "CaptureReader",
    "EvalReport",
    "FeatureVector",
    "FiveTuple",
    "LinearModel",
    "PacketRecord",
    "Prediction",
    "ScalerParams",
    "TrafficClass",
    "WindowConfig",
    "WindowStats",
    "apply_scaler",
    "assemble",
    "compute_window_stats",
    "entropy",
    "evaluate",
    "fit_scaler",
    "five_tuple_of",
    "general_features",
    "interpolate",
    "kmeans_select",
    "parse_capture",
    "window_id",
]
