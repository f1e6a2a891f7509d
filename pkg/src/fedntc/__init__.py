"""Deterministic numpy testbed for federated learned compression.

Shared analysis/synthesis transforms with per-client factorized entropy
models, trained under three regimes (local, fed, fedavg), measured with a
real range coder, and checked against closed-form Gaussian references.
"""

from .checkpoint import load_params, save_params
from .codec import (
    EvalResult,
    add_uniform_noise,
    decode,
    encode,
    measure_rate,
    quantize_round,
)
from .config import ExperimentConfig, load_config, parse_config
from .entropy import CdfTable, FactorizedEntropyModel
from .errors import (
    CheckpointError,
    ConfigError,
    DecodeError,
    DomainError,
    FedNTCError,
    FormatError,
    PartitionError,
    ShapeError,
    TableError,
    TrainingError,
)
from .federation import (
    ClientState,
    FedConfig,
    RDPoint,
    ServerState,
    client_objective,
    final_point,
    make_setup,
    train,
    train_fed_ntc,
    train_fedavg,
    train_local_ntc,
)
from .nn import Adam, DenseLayer, Sgd, Transform, grad_check
from .oracle import (
    RdCurve,
    empirical_discrete_entropy,
    fed_rd,
    gaussian_rd,
    reverse_waterfill,
    sample_rd_curve,
)
from .sources import (
    Dataset,
    SourceSpec,
    gen_synthetic,
    heterogeneous_scales,
    load_image_dataset,
    partition_non_iid,
    trim_to_shardable,
)

__version__ = "0.1.0"
