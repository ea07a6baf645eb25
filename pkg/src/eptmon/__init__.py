"""eptmon: EPT-violation telemetry pipeline.

Simulated hypervisor/guest telemetry source, binary UDP wire format,
windowed 18-dimensional feature extraction, and from-scratch classifiers
with a cross-validated evaluation harness.
"""
from .trace import (
    AccessEvent,
    AccessType,
    ClassLabel,
    PageType,
    Trace,
    validate_trace,
)
from .wire import (
    CollectResult,
    DatagramBatch,
    WireDecodeError,
    WireFormatError,
    collect,
    decode_record,
    encode_record,
    pack_datagrams,
    read_trace_file,
    send_trace,
    write_trace_file,
)
from .simulator import (
    AddressModel,
    Burst,
    ContentKind,
    CumulativeCurve,
    SimConfig,
    TranslationState,
    WorkloadProfile,
    cumulative_violations,
    flush,
    make_profile,
    run_workload,
    simulate_trial,
    step_access,
)
from .features import (
    FEATURE_COLUMNS,
    FeatureVector,
    N_FEATURES,
    WindowConfig,
    address_variance,
    extract_windows,
    page_counts,
    page_entropy,
    read_features_csv,
    window_entropy,
    write_features_csv,
)

__version__ = "0.1.0"
