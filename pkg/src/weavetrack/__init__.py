"""weavetrack: real-time texture tracking and thread counting on woven
fabrics. Detects stable blob features, matches them across frames, robustly
estimates the rigid motion, detects the repetitive weave lattice, and keeps
cumulative fractional warp/weft thread counts, validated against a built-in
synthetic weave generator with exact ground truth.
"""

from .config import Config, ConfigError, load_config, save_config
from .descriptor import (
    BinaryDescriptor,
    Keypoint,
    Match,
    describe,
    hamming,
    match_features,
)
from .features import (
    BlobClasses,
    Ellipse,
    MserParams,
    MserRegion,
    classify_blobs,
    detect_mser,
    fit_ellipse,
)
from .geometry import (
    EstimationError,
    MsacParams,
    RigidTransform,
    compose,
    decompose,
    estimate_rigid,
    identity,
    inverse,
)
from .imagecore import (
    CorrelationMap,
    GrayImage,
    ImageFormatError,
    Spectrum,
    fft_magnitude,
    load_image,
    ncc,
    sample_bilinear,
    save_pgm,
    save_png,
)
from .lattice import (
    BlobTemplate,
    DominantOrientations,
    LatticeBasis,
    LatticeError,
    ThreadDelta,
    detect_lattice,
    dominant_orientations,
    find_neighbors,
    learn_template,
    thread_decompose,
    threads_to_physical,
)
from .synth import WeaveSpec, generate_sequence, render
from .tracker import FrameResult, TrackerState, init, reacquire, track

__version__ = "0.1.0"
