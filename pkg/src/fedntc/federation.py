"""Federated training protocols over transform-plus-entropy compressors.

Three regimes share one objective, rate_loss + lambda * MSE on uniform-noise
latents:

* local: every client trains its own analysis/synthesis/entropy stack
  jointly, no communication.
* fed: analysis/synthesis are global and averaged by the server; each
  client keeps a personalized entropy model that never leaves the client.
  A round runs entropy-only steps against the freshly received globals,
  then transform-only steps on a scratch copy that is sent back.
* fedavg: everything is global, including a single shared entropy model;
  participants run joint steps and the server averages all parameters.

Determinism: every random draw derives from SeedSequence spawn keys.
Participation uses (master seed, round); each client's minibatches and
noise use (client seed, round), where client seeds are spawned from the
master seed at setup. Results are therefore independent of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import add_uniform_noise, measure_rate
from .entropy import FactorizedEntropyModel
from .errors import ConfigError, TrainingError
from .nn import Transform, make_optimizer

REGIMES = ("local", "fed", "fedavg")


@dataclass
class FedConfig:
    """Knobs shared by all regimes; regime-specific ones are ignored elsewhere."""

    rounds: int
    lam: float = 1.0
    lr: float = 1e-3
    batch_size: int = 32
    optimizer: str = "adam"
    entropy_steps: int = 10  # fed: personalization phase length
    transform_steps: int = 10  # fed: global phase length
    participation: float = 1.0
    fedavg_local_steps: int = 10
    eval_precision: int = 16
    eval_tail_mass: float = 2.0**-8
    eval_every: int = 1
    eval_tail: int = 0  # additionally evaluate every one of the last `eval_tail` rounds

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("training.rounds: must be at least 1")
        if not 0.0 < self.participation <= 1.0:
            raise ConfigError("training.participation: must be in (0, 1]")
        if self.batch_size < 1:
            raise ConfigError("training.batch_size: must be at least 1")
        if self.entropy_steps < 0 or self.transform_steps < 0:
            raise ConfigError("training phase step counts must be nonnegative")
        if self.fedavg_local_steps < 1:
            raise ConfigError("training.fedavg_local_steps: must be at least 1")
        if self.eval_every < 1:
            raise ConfigError("eval.every: must be at least 1")
        if self.eval_tail < 0:
            raise ConfigError("eval.tail: must be nonnegative")

    def participants_per_round(self, n_clients: int) -> int:
        k = int(np.floor(self.participation * n_clients + 0.5))
        k = min(k, n_clients)
        if k < 1:
            raise ConfigError(
                f"training.participation: {self.participation} selects no client "
                f"out of {n_clients}"
            )
        return k


@dataclass
class ClientState:
    client_id: int
    seed: int
    train_x: np.ndarray
    eval_x: np.ndarray
    model: FactorizedEntropyModel
    entropy_opt: object
    g_a: Transform | None = None  # owned transforms (local regime)
    g_s: Transform | None = None
    transform_opt_a: object | None = None
    transform_opt_s: object | None = None

    def round_rng(self, round_index: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(2, round_index))
        )


@dataclass
class ServerState:
    g_a: Transform
    g_s: Transform
    master_seed: int
    round_index: int = 0
    shared_model: FactorizedEntropyModel | None = None  # fedavg only

    def participation_rng(self, round_index: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.master_seed, spawn_key=(0, round_index))
        )

    def parameters(self) -> dict[str, np.ndarray]:
        """Flat named view of everything the server holds (checkpoint/audit)."""
        out = {}
        for prefix, t in (("g_a", self.g_a), ("g_s", self.g_s)):
            for name, arr in t.parameters().items():
                out[f"{prefix}/{name}"] = arr
        if self.shared_model is not None:
            for name, arr in self.shared_model.parameters().items():
                out[f"shared_model/{name}"] = arr
        return out


def client_seed(master_seed: int, client_id: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(1, client_id))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_setup(
    train_shards: list[np.ndarray],
    eval_shards: list[np.ndarray],
    d_latent: int,
    hidden_widths: list[int],
    master_seed: int,
    cfg: FedConfig,
    entropy_filters: tuple[int, ...] = (3, 3, 3),
    entropy_init_scale: float = 1.0,
    regime: str = "fed",
) -> tuple[ServerState, list[ClientState]]:
    """Build server and clients with all parameters derived from master_seed."""
    if regime not in REGIMES:
        raise ConfigError(f"regime: unknown regime {regime!r}")
    if len(train_shards) != len(eval_shards):
        raise ConfigError("need one eval shard per train shard")
    d_x = train_shards[0].shape[1]
    widths = [d_x] + list(hidden_widths) + [d_latent]
    g_rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0,)))
    server = ServerState(
        g_a=Transform.create(widths, g_rng, role="analysis"),
        g_s=Transform.create(list(reversed(widths)), g_rng, role="synthesis"),
        master_seed=master_seed,
    )
    if regime == "fedavg":
        server.shared_model = FactorizedEntropyModel(
            d_latent,
            entropy_filters,
            entropy_init_scale,
            np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(4,))),
        )
    clients = []
    for i, (tr, ev) in enumerate(zip(train_shards, eval_shards)):
        seed = client_seed(master_seed, i)
        model_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
        model = FactorizedEntropyModel(
            d_latent, entropy_filters, entropy_init_scale, model_rng
        )
        if regime == "fedavg":
            # Personal slot is just a scratch copy of the shared model.
            model.load_parameters(server.shared_model.parameters())
        client = ClientState(
            client_id=i,
            seed=seed,
            train_x=np.ascontiguousarray(tr, dtype=np.float64),
            eval_x=np.ascontiguousarray(ev, dtype=np.float64),
            model=model,
            entropy_opt=make_optimizer(cfg.optimizer, cfg.lr),
        )
        if regime == "local":
            init_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(5,)))
            client.g_a = Transform.create(widths, init_rng, role="analysis")
            client.g_s = Transform.create(list(reversed(widths)), init_rng, role="synthesis")
            client.transform_opt_a = make_optimizer(cfg.optimizer, cfg.lr)
            client.transform_opt_s = make_optimizer(cfg.optimizer, cfg.lr)
        clients.append(client)
    return server, clients


# -- objective ------------------------------------------------------------


@dataclass
class ObjectiveParts:
    loss: float
    rate_bits: float  # bits per sample under the noise proxy
    mse: float


def client_objective(
    x: np.ndarray,
    g_a: Transform,
    g_s: Transform,
    model: FactorizedEntropyModel,
    lam: float,
    rng: np.random.Generator,
) -> ObjectiveParts:
    """Forward-only objective on one batch with fresh uniform noise."""
    y = g_a.forward(x)
    y_noisy = add_uniform_noise(y, rng)
    rate = model.rate_loss(y_noisy)
    x_hat = g_s.forward(y_noisy)
    mse = float(np.mean((x - x_hat) ** 2))
    return ObjectiveParts(loss=rate + lam * mse, rate_bits=rate, mse=mse)


def objective_with_grads(
    x: np.ndarray,
    g_a: Transform,
    g_s: Transform,
    model: FactorizedEntropyModel,
    lam: float,
    noise: np.ndarray,
):
    """Full reverse pass; returns (parts, grads_a, grads_s, grads_e)."""
    y, cache_a = g_a.forward_cached(x)
    y_noisy = y + noise
    rate, grads_e, d_y_rate = model.rate_loss_with_grads(y_noisy)
    x_hat, cache_s = g_s.forward_cached(y_noisy)
    diff = x_hat - x
    mse = float(np.mean(diff**2))
    d_xhat = (2.0 * lam / diff.size) * diff
    grads_s, d_y_dist = g_s.backward(cache_s, d_xhat)
    grads_a, _ = g_a.backward(cache_a, d_y_rate + d_y_dist)
    parts = ObjectiveParts(loss=rate + lam * mse, rate_bits=rate, mse=mse)
    return parts, grads_a, grads_s, grads_e


def _check_loss(parts: ObjectiveParts, client_id: int, what: str) -> None:
    if not np.isfinite(parts.loss):
        raise TrainingError(
            f"client {client_id}: non-finite loss during {what} "
            f"(rate={parts.rate_bits}, mse={parts.mse})"
        )


def _minibatch(x: np.ndarray, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    idx = rng.integers(0, x.shape[0], size=batch_size)
    return x[idx]


def _noise_like(y_shape, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.5, 0.5, size=y_shape)


# -- per-client step variants ---------------------------------------------


def entropy_step(
    client: ClientState, g_a: Transform, cfg: FedConfig, rng: np.random.Generator
) -> None:
    """One personalization step: only the entropy model moves. Gradients flow
    through latents produced by the given (frozen) analysis transform."""
    x = _minibatch(client.train_x, cfg.batch_size, rng)
    y = g_a.forward(x)
    y_noisy = add_uniform_noise(y, rng)
    rate, grads_e, _ = client.model.rate_loss_with_grads(y_noisy)
    if not np.isfinite(rate):
        raise TrainingError(f"client {client.client_id}: non-finite rate during entropy phase")
    client.entropy_opt.step(client.model.parameters(), grads_e)


def transform_step(
    client: ClientState,
    g_a: Transform,
    g_s: Transform,
    opt_a,
    opt_s,
    cfg: FedConfig,
    rng: np.random.Generator,
) -> None:
    """One global-phase step: transforms move, the entropy model is frozen."""
    x = _minibatch(client.train_x, cfg.batch_size, rng)
    y = g_a.forward(x)
    noise = _noise_like(y.shape, rng)
    parts, grads_a, grads_s, _ = objective_with_grads(
        x, g_a, g_s, client.model, cfg.lam, noise
    )
    _check_loss(parts, client.client_id, "transform phase")
    opt_a.step(g_a.parameters(), grads_a)
    opt_s.step(g_s.parameters(), grads_s)


def joint_step(
    client: ClientState,
    g_a: Transform,
    g_s: Transform,
    model: FactorizedEntropyModel,
    opt_a,
    opt_s,
    opt_e,
    cfg: FedConfig,
    rng: np.random.Generator,
) -> ObjectiveParts:
    """One step on all three parameter groups (local and fedavg regimes)."""
    x = _minibatch(client.train_x, cfg.batch_size, rng)
    y = g_a.forward(x)
    noise = _noise_like(y.shape, rng)
    parts, grads_a, grads_s, grads_e = objective_with_grads(
        x, g_a, g_s, model, cfg.lam, noise
    )
    _check_loss(parts, client.client_id, "joint step")
    opt_a.step(g_a.parameters(), grads_a)
    opt_s.step(g_s.parameters(), grads_s)
    opt_e.step(model.parameters(), grads_e)
    return parts


# -- evaluation and traces -------------------------------------------------


def evaluate_clients(
    clients: list[ClientState],
    transforms_for,
    model_for,
    cfg: FedConfig,
) -> dict:
    """Codec pass for every client; returns the per-round log payload.

    transforms_for(client) -> (g_a, g_s); model_for(client) -> entropy model.
    Rates come from real range-coded streams, never from the loss proxy.
    """
    per_client = []
    for client in clients:
        g_a, g_s = transforms_for(client)
        model = model_for(client)
        tables = model.build_cdf_table(cfg.eval_precision, cfg.eval_tail_mass)
        res = measure_rate(client.eval_x, g_a, g_s, model, tables)
        per_client.append(
            {
                "id": client.client_id,
                "bits_per_sample": res.bits_per_sample,
                "mse": res.mse,
            }
        )
    r_n = float(np.mean([c["bits_per_sample"] for c in per_client]))
    d_n = float(np.mean([c["mse"] for c in per_client]))
    return {"per_client": per_client, "R_n": r_n, "D_n": d_n}


@dataclass
class RDPoint:
    lam: float
    rate: float  # bits per sample
    distortion: float  # MSE per entry
    round_index: int
    regime: str


def final_point(trace: list[dict], window: int = 10) -> RDPoint:
    """Operating point averaged over the last `window` logged rounds."""
    if not trace:
        raise ConfigError("trace is empty; nothing was evaluated")
    tail = trace[-window:]
    return RDPoint(
        lam=float(tail[-1]["lambda"]),
        rate=float(np.mean([t["R_n"] for t in tail])),
        distortion=float(np.mean([t["D_n"] for t in tail])),
        round_index=int(tail[-1]["round"]),
        regime=str(tail[-1]["regime"]),
    )


def _log_round(
    trace: list[dict],
    round_index: int,
    regime: str,
    cfg: FedConfig,
    clients,
    transforms_for,
    model_for,
) -> None:
    due = (
        (round_index + 1) % cfg.eval_every == 0
        or round_index + 1 == cfg.rounds
        or round_index >= cfg.rounds - cfg.eval_tail
    )
    if not due:
        return
    entry = {"round": round_index, "regime": regime, "lambda": cfg.lam}
    entry.update(evaluate_clients(clients, transforms_for, model_for, cfg))
    trace.append(entry)


# -- training loops --------------------------------------------------------


def train_local_ntc(clients: list[ClientState], cfg: FedConfig) -> list[dict]:
    """No-communication baseline: per-client joint training.

    Each round performs entropy_steps + transform_steps joint iterations per
    client so step budgets line up with one federated round.
    """
    steps_per_round = cfg.entropy_steps + cfg.transform_steps
    trace: list[dict] = []
    for r in range(cfg.rounds):
        for client in clients:
            if client.g_a is None:
                raise ConfigError(f"client {client.client_id} has no owned transforms")
            rng = client.round_rng(r)
            for _ in range(steps_per_round):
                joint_step(
                    client,
                    client.g_a,
                    client.g_s,
                    client.model,
                    client.transform_opt_a,
                    client.transform_opt_s,
                    client.entropy_opt,
                    cfg,
                    rng,
                )
        _log_round(
            trace,
            r,
            "local",
            cfg,
            clients,
            lambda c: (c.g_a, c.g_s),
            lambda c: c.model,
        )
    return trace


def select_participants(server: ServerState, n_clients: int, cfg: FedConfig) -> list[int]:
    """Sorted participant ids for the server's current round."""
    k = cfg.participants_per_round(n_clients)
    rng = server.participation_rng(server.round_index)
    chosen = rng.choice(n_clients, size=k, replace=False)
    return sorted(int(i) for i in chosen)


def _average_params(param_dicts: list[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    out = {}
    scale = 1.0 / len(param_dicts)
    for name in param_dicts[0]:
        acc = np.zeros_like(param_dicts[0][name])
        for d in param_dicts:
            acc += d[name]
        out[name] = acc * scale
    return out


def fed_ntc_round(server: ServerState, clients: list[ClientState], cfg: FedConfig) -> list[int]:
    """One communication round: personalize entropy models against the received
    globals, then train scratch transforms and average them on the server."""
    participants = select_participants(server, len(clients), cfg)
    sent_a: list[dict] = []
    sent_s: list[dict] = []
    for cid in participants:
        client = clients[cid]
        rng = client.round_rng(server.round_index)
        for _ in range(cfg.entropy_steps):
            entropy_step(client, server.g_a, cfg, rng)
        scratch_a = server.g_a.copy()
        scratch_s = server.g_s.copy()
        opt_a = make_optimizer(cfg.optimizer, cfg.lr)
        opt_s = make_optimizer(cfg.optimizer, cfg.lr)
        for _ in range(cfg.transform_steps):
            transform_step(client, scratch_a, scratch_s, opt_a, opt_s, cfg, rng)
        sent_a.append({k: v.copy() for k, v in scratch_a.parameters().items()})
        sent_s.append({k: v.copy() for k, v in scratch_s.parameters().items()})
    server.g_a.load_parameters(_average_params(sent_a))
    server.g_s.load_parameters(_average_params(sent_s))
    server.round_index += 1
    return participants


def train_fed_ntc(
    server: ServerState, clients: list[ClientState], cfg: FedConfig
) -> list[dict]:
    if server.shared_model is not None:
        raise ConfigError("fed regime must not hold an entropy model on the server")
    trace: list[dict] = []
    for r in range(cfg.rounds):
        fed_ntc_round(server, clients, cfg)
        _log_round(
            trace,
            r,
            "fed",
            cfg,
            clients,
            lambda c: (server.g_a, server.g_s),
            lambda c: c.model,
        )
    return trace


def fedavg_round(server: ServerState, clients: list[ClientState], cfg: FedConfig) -> list[int]:
    """Classic full-model averaging, entropy model included."""
    if server.shared_model is None:
        raise ConfigError("fedavg regime needs a shared entropy model on the server")
    participants = select_participants(server, len(clients), cfg)
    sent: list[dict] = []
    for cid in participants:
        client = clients[cid]
        rng = client.round_rng(server.round_index)
        g_a = server.g_a.copy()
        g_s = server.g_s.copy()
        client.model.load_parameters(server.shared_model.parameters())
        opt_a = make_optimizer(cfg.optimizer, cfg.lr)
        opt_s = make_optimizer(cfg.optimizer, cfg.lr)
        opt_e = make_optimizer(cfg.optimizer, cfg.lr)
        for _ in range(cfg.fedavg_local_steps):
            joint_step(client, g_a, g_s, client.model, opt_a, opt_s, opt_e, cfg, rng)
        bundle = {f"g_a/{k}": v.copy() for k, v in g_a.parameters().items()}
        bundle.update({f"g_s/{k}": v.copy() for k, v in g_s.parameters().items()})
        bundle.update(
            {f"model/{k}": v.copy() for k, v in client.model.parameters().items()}
        )
        sent.append(bundle)
    avg = _average_params(sent)
    server.g_a.load_parameters(
        {k[len("g_a/") :]: v for k, v in avg.items() if k.startswith("g_a/")}
    )
    server.g_s.load_parameters(
        {k[len("g_s/") :]: v for k, v in avg.items() if k.startswith("g_s/")}
    )
    server.shared_model.load_parameters(
        {k[len("model/") :]: v for k, v in avg.items() if k.startswith("model/")}
    )
    server.round_index += 1
    return participants


def train_fedavg(
    server: ServerState, clients: list[ClientState], cfg: FedConfig
) -> list[dict]:
    trace: list[dict] = []
    for r in range(cfg.rounds):
        fedavg_round(server, clients, cfg)
        _log_round(
            trace,
            r,
            "fedavg",
            cfg,
            clients,
            lambda c: (server.g_a, server.g_s),
            lambda c: server.shared_model,
        )
    return trace


def train(
    regime: str, server: ServerState, clients: list[ClientState], cfg: FedConfig
) -> list[dict]:
    if regime == "local":
        return train_local_ntc(clients, cfg)
    if regime == "fed":
        return train_fed_ntc(server, clients, cfg)
    if regime == "fedavg":
        return train_fedavg(server, clients, cfg)
    raise ConfigError(f"regime: unknown regime {regime!r}")
