"""Run configuration: one TOML file, strictly validated.

Every key is either consumed by the schema below or rejected with its full
path; required keys have no silent defaults. The documented schema lives in
the README and in demos/config_reference.toml.
"""

from __future__ import annotations

from dataclasses import dataclass, field

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import ConfigError
from .federation import REGIMES, FedConfig

_REQUIRED = object()


class _Section:
    """Pulls typed keys out of one TOML table and rejects leftovers."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a table")
        self.data = dict(data)
        self.path = path

    def take(self, key: str, types, default=_REQUIRED, check=None, what: str = ""):
        path = f"{self.path}.{key}" if self.path else key
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"{path}: required key is missing")
            return default
        value = self.data.pop(key)
        if types is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if types is int and isinstance(value, bool):
            raise ConfigError(f"{path}: expected an integer, got a boolean")
        if not isinstance(value, types):
            want = types.__name__ if isinstance(types, type) else "/".join(
                t.__name__ for t in types
            )
            raise ConfigError(f"{path}: expected {want}, got {type(value).__name__}")
        if check is not None and not check(value):
            raise ConfigError(f"{path}: {what or 'invalid value'} (got {value!r})")
        return value

    def subtable(self, key: str, required: bool = False) -> "_Section | None":
        path = f"{self.path}.{key}" if self.path else key
        if key not in self.data:
            if required:
                raise ConfigError(f"{path}: required section is missing")
            return _Section({}, path)
        return _Section(self.data.pop(key), path)

    def finish(self) -> None:
        if self.data:
            key = sorted(self.data)[0]
            path = f"{self.path}.{key}" if self.path else key
            raise ConfigError(f"{path}: unknown key")


def _int_list(value, path: str, what: str) -> list[int]:
    if not isinstance(value, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(f"{path}: expected a list of integers ({what})")
    return [int(v) for v in value]


def _sigma_levels(value, path: str, positive: bool) -> float | list[float]:
    floor = "positive" if positive else "nonnegative"
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a {floor} number or list of numbers")
    if isinstance(value, (int, float)):
        value = [float(value)]
        scalar = True
    else:
        scalar = False
    out = _float_list(value, path, f"{floor} scale levels")
    for v in out:
        if v < 0 or (positive and v == 0):
            raise ConfigError(f"{path}: scale levels must be {floor} (got {v!r})")
    return out[0] if scalar else out


def _float_list(value, path: str, what: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a nonempty list of numbers ({what})")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}: expected a nonempty list of numbers ({what})")
        out.append(float(v))
    return out


@dataclass
class SourceConfig:
    kind: str = "synthetic"
    latent_dim: int = 16
    ambient_dim: int = 16
    clients: int = 2
    samples_per_client: int = 50
    eval_samples_per_client: int = 256
    map: str = "orthogonal"
    map_seed: int = 0
    sigma_active: float | list[float] = 8.0
    sigma_inactive: float | list[float] = 0.5
    active_dims: int | None = None
    path: str | None = None
    format: str | None = None
    shards_per_client: int = 2
    eval_fraction: float = 0.2


@dataclass
class ModelConfig:
    latent_channels: int = 16
    hidden_widths: list[int] = field(default_factory=lambda: [32])
    entropy_filters: tuple[int, ...] = (3, 3, 3)
    entropy_init_scale: float = 1.0


@dataclass
class TrainingConfig:
    rounds: int = 100
    lambdas: list[float] = field(default_factory=lambda: [0.001, 0.01, 0.1, 1.0, 10.0])
    lr: float = 1e-3
    batch_size: int = 32
    optimizer: str = "adam"
    entropy_steps: int = 10
    transform_steps: int = 10
    participation: float = 1.0
    fedavg_local_steps: int = 10


@dataclass
class EvalConfig:
    precision: int = 16
    tail_mass: float = 2.0**-8
    every: int = 1
    tail: int = 0
    final_window: int = 10


@dataclass
class ExperimentConfig:
    regime: str
    master_seed: int
    replicates: int = 1
    output_dir: str = "runs"
    source: SourceConfig = field(default_factory=SourceConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def fed_config(self, lam: float) -> FedConfig:
        return FedConfig(
            rounds=self.training.rounds,
            lam=lam,
            lr=self.training.lr,
            batch_size=self.training.batch_size,
            optimizer=self.training.optimizer,
            entropy_steps=self.training.entropy_steps,
            transform_steps=self.training.transform_steps,
            participation=self.training.participation,
            fedavg_local_steps=self.training.fedavg_local_steps,
            eval_precision=self.eval.precision,
            eval_tail_mass=self.eval.tail_mass,
            eval_every=self.eval.every,
            eval_tail=self.eval.tail,
        )

    def replicate_seed(self, replicate: int) -> int:
        return self.master_seed + replicate


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from e
    root = _Section(raw, "")
    regime = root.take(
        "regime", str, check=lambda v: v in REGIMES, what=f"must be one of {REGIMES}"
    )
    output_dir = root.take("output_dir", str, default="runs")

    src_t = root.subtable("source")
    src = SourceConfig()
    src.kind = src_t.take(
        "kind",
        str,
        default="synthetic",
        check=lambda v: v in ("synthetic", "dataset"),
        what="must be 'synthetic' or 'dataset'",
    )
    src.latent_dim = src_t.take("latent_dim", int, default=16, check=lambda v: v >= 1)
    src.ambient_dim = src_t.take(
        "ambient_dim", int, default=src.latent_dim, check=lambda v: v >= 1
    )
    src.clients = src_t.take("clients", int, default=2, check=lambda v: v >= 1)
    src.samples_per_client = src_t.take(
        "samples_per_client", int, default=50, check=lambda v: v >= 1
    )
    src.eval_samples_per_client = src_t.take(
        "eval_samples_per_client", int, default=256, check=lambda v: v >= 1
    )
    src.map = src_t.take(
        "map",
        str,
        default="orthogonal",
        check=lambda v: v in ("identity", "orthogonal", "mlp"),
        what="must be identity, orthogonal, or mlp",
    )
    src.map_seed = src_t.take("map_seed", int, default=0)
    # Scalars apply to every client; a list is cycled over clients so the
    # population can mix scale levels.
    raw_active = src_t.take("sigma_active", (float, int, list), default=8.0)
    src.sigma_active = _sigma_levels(raw_active, "source.sigma_active", positive=True)
    raw_inactive = src_t.take("sigma_inactive", (float, int, list), default=0.5)
    src.sigma_inactive = _sigma_levels(
        raw_inactive, "source.sigma_inactive", positive=False
    )
    src.active_dims = src_t.take("active_dims", int, default=None, check=lambda v: v >= 1)
    src.path = src_t.take("path", str, default=None)
    src.format = src_t.take(
        "format",
        str,
        default=None,
        check=lambda v: v in ("cifar10-binary", "raw-f64"),
        what="must be cifar10-binary or raw-f64",
    )
    src.shards_per_client = src_t.take(
        "shards_per_client", int, default=2, check=lambda v: v >= 1
    )
    src.eval_fraction = src_t.take(
        "eval_fraction", float, default=0.2, check=lambda v: 0 < v < 1
    )
    src_t.finish()
    if src.kind == "dataset":
        if src.path is None:
            raise ConfigError("source.path: required when source.kind = 'dataset'")
        if src.format is None:
            raise ConfigError("source.format: required when source.kind = 'dataset'")

    model_t = root.subtable("model")
    model = ModelConfig()
    model.latent_channels = model_t.take(
        "latent_channels", int, default=16, check=lambda v: v >= 1
    )
    widths = model_t.take("hidden_widths", list, default=[32])
    model.hidden_widths = _int_list(widths, f"model.hidden_widths", "layer widths")
    if any(w < 1 for w in model.hidden_widths):
        raise ConfigError("model.hidden_widths: widths must be positive")
    filters = model_t.take("entropy_filters", list, default=[3, 3, 3])
    filters = _int_list(filters, "model.entropy_filters", "filter widths")
    if not filters or any(f < 1 for f in filters):
        raise ConfigError("model.entropy_filters: need positive widths")
    model.entropy_filters = tuple(filters)
    model.entropy_init_scale = model_t.take(
        "entropy_init_scale", float, default=1.0, check=lambda v: v > 0
    )
    model_t.finish()

    train_t = root.subtable("training")
    tr = TrainingConfig()
    tr.rounds = train_t.take("rounds", int, default=100, check=lambda v: v >= 1)
    lambdas = train_t.take("lambdas", list, default=[0.001, 0.01, 0.1, 1.0, 10.0])
    tr.lambdas = _float_list(lambdas, "training.lambdas", "trade-off weights")
    if any(l <= 0 for l in tr.lambdas):
        raise ConfigError("training.lambdas: weights must be positive")
    tr.lr = train_t.take("lr", float, default=1e-3, check=lambda v: v > 0)
    tr.batch_size = train_t.take("batch_size", int, default=32, check=lambda v: v >= 1)
    tr.optimizer = train_t.take(
        "optimizer",
        str,
        default="adam",
        check=lambda v: v in ("adam", "sgd"),
        what="must be adam or sgd",
    )
    tr.entropy_steps = train_t.take("entropy_steps", int, default=10, check=lambda v: v >= 0)
    tr.transform_steps = train_t.take(
        "transform_steps", int, default=10, check=lambda v: v >= 0
    )
    tr.participation = train_t.take(
        "participation", float, default=1.0, check=lambda v: 0 < v <= 1
    )
    tr.fedavg_local_steps = train_t.take(
        "fedavg_local_steps", int, default=10, check=lambda v: v >= 1
    )
    train_t.finish()

    seeds_t = root.subtable("seeds", required=True)
    master = seeds_t.take("master", int)
    replicates = seeds_t.take("replicates", int, default=1, check=lambda v: v >= 1)
    seeds_t.finish()

    eval_t = root.subtable("eval")
    ev = EvalConfig()
    ev.precision = eval_t.take(
        "precision", int, default=16, check=lambda v: 8 <= v <= 24,
        what="must be in [8, 24]",
    )
    ev.tail_mass = eval_t.take(
        "tail_mass", float, default=2.0**-8, check=lambda v: 0 < v < 1
    )
    ev.every = eval_t.take("every", int, default=1, check=lambda v: v >= 1)
    ev.tail = eval_t.take("tail", int, default=0, check=lambda v: v >= 0)
    ev.final_window = eval_t.take("final_window", int, default=10, check=lambda v: v >= 1)
    eval_t.finish()

    root.finish()
    return ExperimentConfig(
        regime=regime,
        master_seed=master,
        replicates=replicates,
        output_dir=output_dir,
        source=src,
        model=model,
        training=tr,
        eval=ev,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config(text)
