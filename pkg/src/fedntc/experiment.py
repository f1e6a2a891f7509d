"""Config-driven runs: data synthesis, sweeps, traces, checkpoints, CSV.

A run directory contains the echoed config, one JSONL trace and one
checkpoint per (lambda, replicate) point, and a canonical results.csv.
Reruns of the same config produce byte-identical files; FNTC_THREADS > 1
computes sweep points in worker processes without changing any output.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import load_params, save_params
from .config import ExperimentConfig
from .errors import CheckpointError, ConfigError, ShapeError
from .federation import (
    ClientState,
    FedConfig,
    ServerState,
    evaluate_clients,
    final_point,
    make_setup,
    train,
)
from .sources import (
    EVAL_STREAM,
    TRAIN_STREAM,
    SourceSpec,
    gen_synthetic,
    heterogeneous_scales,
    load_image_dataset,
    partition_non_iid,
    trim_to_shardable,
)


def synthetic_spec(config: ExperimentConfig) -> SourceSpec:
    s = config.source
    scales = heterogeneous_scales(
        s.clients,
        s.latent_dim,
        active_dims=s.active_dims,
        sigma_active=s.sigma_active,
        sigma_inactive=s.sigma_inactive,
    )
    return SourceSpec(
        latent_dim=s.latent_dim,
        ambient_dim=s.ambient_dim,
        scales=scales,
        map_kind=s.map,
        map_seed=s.map_seed,
    )


def client_ambient_variances(config: ExperimentConfig) -> list[np.ndarray] | None:
    """Per-client ambient eigen-variances for oracle curves, when they exist.

    An orthogonal map keeps the latent variances as ambient eigenvalues
    (padded with zeros when ambient_dim > latent_dim); identity likewise.
    For mlp maps there is no closed form.
    """
    s = config.source
    if s.kind != "synthetic" or s.map == "mlp":
        return None
    spec = synthetic_spec(config)
    out = []
    for i in range(spec.n_clients):
        v = spec.scales[i] ** 2
        if s.ambient_dim > s.latent_dim:
            v = np.concatenate([v, np.zeros(s.ambient_dim - s.latent_dim)])
        out.append(v)
    return out


def build_shards(config: ExperimentConfig, seed: int):
    """Per-client (train, eval) sample arrays for one replicate seed."""
    s = config.source
    if s.kind == "synthetic":
        spec = synthetic_spec(config)
        train_shards = gen_synthetic(spec, s.samples_per_client, seed, stream=TRAIN_STREAM)
        eval_shards = gen_synthetic(
            spec, s.eval_samples_per_client, seed, stream=EVAL_STREAM
        )
        return train_shards, eval_shards
    dataset = load_image_dataset(s.path, s.format)
    if dataset.labels is None:
        raise ConfigError("source.path: dataset has no labels to partition on")
    keep = trim_to_shardable(dataset.labels, s.clients, s.shards_per_client)
    labels = dataset.labels[keep]
    samples = dataset.samples[keep]
    plan = partition_non_iid(labels, s.clients, s.shards_per_client, seed)
    train_shards, eval_shards = [], []
    for idx in plan.assignments:
        n_eval = max(1, int(np.ceil(s.eval_fraction * idx.size)))
        if n_eval >= idx.size:
            raise ConfigError(
                "source.eval_fraction: leaves no training samples for a client"
            )
        eval_shards.append(samples[idx[-n_eval:]])
        train_shards.append(samples[idx[:-n_eval]])
    return train_shards, eval_shards


def make_run(config: ExperimentConfig, lam: float, seed: int):
    """Server and clients for one sweep point, before any training."""
    train_shards, eval_shards = build_shards(config, seed)
    cfg = config.fed_config(lam)
    server, clients = make_setup(
        train_shards,
        eval_shards,
        d_latent=config.model.latent_channels,
        hidden_widths=config.model.hidden_widths,
        master_seed=seed,
        cfg=cfg,
        entropy_filters=config.model.entropy_filters,
        entropy_init_scale=config.model.entropy_init_scale,
        regime=config.regime,
    )
    return server, clients, cfg


def collect_state(server: ServerState, clients: list[ClientState]) -> dict[str, np.ndarray]:
    """Flat named parameter view of a whole run, for checkpoints."""
    out = {}
    for name, arr in server.parameters().items():
        out[f"server/{name}"] = arr
    for client in clients:
        for name, arr in client.model.parameters().items():
            out[f"client{client.client_id}/model/{name}"] = arr
        if client.g_a is not None:
            for name, arr in client.g_a.parameters().items():
                out[f"client{client.client_id}/g_a/{name}"] = arr
            for name, arr in client.g_s.parameters().items():
                out[f"client{client.client_id}/g_s/{name}"] = arr
    return out


def _strip(prefix: str, params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {k[len(prefix) :]: v for k, v in params.items() if k.startswith(prefix)}
    if not out:
        raise CheckpointError(f"checkpoint holds no parameters under {prefix!r}")
    return out


def restore_state(
    server: ServerState, clients: list[ClientState], params: dict[str, np.ndarray]
) -> None:
    try:
        server.g_a.load_parameters(_strip("server/g_a/", params))
        server.g_s.load_parameters(_strip("server/g_s/", params))
        if server.shared_model is not None:
            server.shared_model.load_parameters(_strip("server/shared_model/", params))
        for client in clients:
            prefix = f"client{client.client_id}/"
            client.model.load_parameters(_strip(prefix + "model/", params))
            if client.g_a is not None:
                client.g_a.load_parameters(_strip(prefix + "g_a/", params))
                client.g_s.load_parameters(_strip(prefix + "g_s/", params))
    except ShapeError as e:
        raise CheckpointError(f"checkpoint does not match this config: {e}") from e


def _point_name(regime: str, lam: float, seed: int) -> str:
    return f"{regime}_lam{lam:g}_seed{seed}"


def run_point(config: ExperimentConfig, lam: float, replicate: int) -> dict:
    """Train one (lambda, replicate) point; returns row, trace, and state."""
    seed = config.replicate_seed(replicate)
    server, clients, cfg = make_run(config, lam, seed)
    trace = train(config.regime, server, clients, cfg)
    fp = final_point(trace, config.eval.final_window)
    d_x = clients[0].eval_x.shape[1]
    row = {
        "regime": config.regime,
        "lambda": lam,
        "seed": seed,
        "rounds": cfg.rounds,
        "rate_bits_per_sample": fp.rate,
        "rate_bits_per_dim": fp.rate / d_x,
        "mse": fp.distortion,
        "loss": fp.rate + lam * fp.distortion,
    }
    return {
        "row": row,
        "trace": trace,
        "state": collect_state(server, clients),
        "name": _point_name(config.regime, lam, seed),
    }


def _worker(args) -> dict:
    config, lam, replicate = args
    return run_point(config, lam, replicate)


RESULT_COLUMNS = [
    "regime",
    "lambda",
    "seed",
    "rounds",
    "rate_bits_per_sample",
    "rate_bits_per_dim",
    "mse",
    "loss",
]


def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(RESULT_COLUMNS)]
    for row in rows:
        cells = []
        for col in RESULT_COLUMNS:
            v = row[col]
            cells.append(repr(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def thread_budget() -> int:
    raw = os.environ.get("FNTC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FNTC_THREADS: expected an integer, got {raw!r}")
    if n < 1:
        raise ConfigError(f"FNTC_THREADS: must be at least 1, got {n}")
    return n


def run_experiment(
    config: ExperimentConfig, out_dir=None, config_text: str | None = None
) -> list[dict]:
    """Full sweep over lambdas x replicates; writes the run directory."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config_text is not None:
        (out / "config.toml").write_text(config_text, encoding="utf-8")
    points = [
        (config, lam, rep)
        for lam in config.training.lambdas
        for rep in range(config.replicates)
    ]
    workers = min(thread_budget(), len(points))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_worker, points))
    else:
        outputs = [_worker(p) for p in points]
    rows = []
    for res in outputs:
        name = res["name"]
        with open(out / f"trace_{name}.jsonl", "w", encoding="utf-8") as f:
            for entry in res["trace"]:
                f.write(json.dumps(entry) + "\n")
        save_params(out / f"ckpt_{name}.fntc", res["state"])
        rows.append(res["row"])
    rows.sort(key=lambda r: (r["lambda"], r["seed"]))
    (out / "results.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    return rows


def evaluate_checkpoint(
    config: ExperimentConfig, ckpt_path, lam: float, replicate: int = 0
) -> dict:
    """Codec evaluation of a stored run state on freshly drawn eval shards."""
    seed = config.replicate_seed(replicate)
    server, clients, cfg = make_run(config, lam, seed)
    restore_state(server, clients, load_params(ckpt_path))
    if config.regime == "local":
        transforms_for = lambda c: (c.g_a, c.g_s)
    else:
        transforms_for = lambda c: (server.g_a, server.g_s)
    if config.regime == "fedavg":
        model_for = lambda c: server.shared_model
    else:
        model_for = lambda c: c.model
    result = evaluate_clients(clients, transforms_for, model_for, cfg)
    result["lambda"] = lam
    result["regime"] = config.regime
    result["seed"] = seed
    return result
