from .detectors import (
    CommandDetector,
    Detection,
    DetectorClient,
    IngestionError,
    StaticDetector,
    WholeFrameDetector,
    detect_primary_face,
    make_detector,
)
from .labels import REMAP_TABLES, LabelSchemeError, register_scheme, remap_label
from .loader import ManifestLoader, load_batch
from .manifest import (
    ManifestError,
    ManifestRecord,
    ManifestStats,
    build_manifest,
    read_manifest,
    write_manifest,
)
from .synthetic import make_synthetic_dataset
