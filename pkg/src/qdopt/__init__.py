"""Quantized distributed optimization: simulators, certification, harness."""

from .errors import (
    ConfigError,
    ConnectivityRetryExhausted,
    DimensionMismatch,
    DisconnectedGraph,
    DuplicateEdge,
    EigensolverFailure,
    FeasibilityNotFound,
    IndivisibleCount,
    InfeasibleParameters,
    IntegralSumNonzero,
    InvalidIndex,
    NonFiniteInput,
    NonFiniteState,
    QdoptError,
    SaturationDetected,
    ScaleIndexMismatch,
    UnsupportedDimension,
)
from .graphs import (
    LaplacianSpectrum,
    UndirectedGraph,
    build_graph,
    load_graph,
    mixing_radius,
    random_connected_graph,
    save_graph,
    spectrum,
)
from .quantization import (
    Decoder,
    DecoderBank,
    Encoder,
    EncoderBank,
    QuantizedMessage,
    UniformQuantizer,
    bits_for_level,
)
from .problems import (
    CostFunction,
    ProblemSuite,
    estimate_pl_constant,
    estimate_smoothness,
    global_optimum_oracle,
    least_squares_suite,
    make_suite,
    nonconvex_suite,
)
from .certify import (
    GtCertificate,
    PiCertificate,
    gt_certify,
    gt_feasible_low_rate,
    gt_s0_floor,
    matrix_power_bound,
    pi_certify,
    pi_feasible_low_rate,
    pi_s0_floor,
)
from .simulate import (
    GtState,
    LambdaMetrics,
    PiState,
    SaturationReport,
    gt_init,
    gt_step,
    lambda_components,
    lambda_metric,
    pi_init,
    pi_step,
    sender_stream,
)

__version__ = "0.1.0"
