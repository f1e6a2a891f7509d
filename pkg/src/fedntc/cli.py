"""Command-line front end.

Subcommands: train, eval, oracle, partition, plot, gradcheck.
Exit codes: 0 success, 2 invalid configuration, 3 numerical failure
during training or checking, 4 file I/O or format problems.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .entropy import FactorizedEntropyModel
from .errors import (
    CheckpointError,
    ConfigError,
    DecodeError,
    DomainError,
    FedNTCError,
    FormatError,
    PartitionError,
    TrainingError,
)
from .experiment import evaluate_checkpoint, run_experiment
from .federation import objective_with_grads
from .nn import Transform, grad_check
from .oracle import RdCurve, curve_to_csv, sample_rd_curve
from .plotting import points_csv, render_rd_svg, series_from_rows
from .sources import load_image_dataset, partition_non_iid, trim_to_shardable

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _cmd_train(args) -> int:
    config = load_config(args.config)
    if args.regime is not None:
        config.regime = args.regime
    text = Path(args.config).read_text(encoding="utf-8")
    rows = run_experiment(config, out_dir=args.out, config_text=text)
    for row in rows:
        print(json.dumps(row))
    out = Path(args.out if args.out is not None else config.output_dir)
    print(f"wrote {out / 'results.csv'}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = load_config(args.config)
    result = evaluate_checkpoint(config, args.checkpoint, args.lam, args.replicate)
    print(json.dumps(result))
    return EXIT_OK


def _parse_variances(text: str) -> list[np.ndarray]:
    clients = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            clients.append(np.array([float(v) for v in part.split(",")], dtype=float))
        except ValueError:
            raise ConfigError(f"--variances: cannot parse {part!r}")
    if not clients:
        raise ConfigError("--variances: no variances given")
    return clients


def _cmd_oracle(args) -> int:
    variances = _parse_variances(args.variances)
    if args.dmin <= 0 or args.dmax <= args.dmin:
        raise ConfigError("--dmin/--dmax: need 0 < dmin < dmax")
    grid = np.linspace(args.dmin, args.dmax, args.points)
    curve = sample_rd_curve(variances, grid)
    text = curve_to_csv(curve)
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_partition(args) -> int:
    dataset = load_image_dataset(args.data, args.format)
    if dataset.labels is None:
        raise FormatError("dataset has no labels to partition on")
    labels = dataset.labels
    if args.trim:
        keep = trim_to_shardable(labels, args.clients, args.shards_per_client)
        labels = labels[keep]
    plan = partition_non_iid(labels, args.clients, args.shards_per_client, args.seed)
    summary = []
    for cid, idx in enumerate(plan.assignments):
        values, counts = np.unique(labels[idx], return_counts=True)
        summary.append(
            {
                "client": cid,
                "samples": int(idx.size),
                "labels": {int(v): int(c) for v, c in zip(values, counts)},
            }
        )
    payload = {
        "clients": args.clients,
        "shards_per_client": plan.shards_per_client,
        "shard_size": plan.shard_size,
        "seed": args.seed,
        "per_client": summary,
    }
    if args.json is not None:
        full = dict(payload)
        full["assignments"] = [idx.tolist() for idx in plan.assignments]
        Path(args.json).write_text(json.dumps(full), encoding="utf-8")
        print(f"wrote {args.json}")
    for entry in summary:
        print(json.dumps(entry))
    return EXIT_OK


def _read_results_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise FormatError(f"{path}: no result rows")
    for row in rows:
        for key in ("mse", "rate_bits_per_dim"):
            if key not in row:
                raise FormatError(f"{path}: missing column {key!r}")
    return rows


def _read_oracle_csv(path) -> RdCurve:
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows or "distortion" not in rows[0] or "rate_bits_per_dim" not in rows[0]:
        raise FormatError(f"{path}: expected distortion,rate_bits_per_dim columns")
    d = np.array([float(r["distortion"]) for r in rows])
    rr = np.array([float(r["rate_bits_per_dim"]) for r in rows])
    return RdCurve(distortions=d, rates=rr, label="oracle")


def _cmd_plot(args) -> int:
    rows = _read_results_csv(args.results)
    series = series_from_rows(rows)
    oracle = _read_oracle_csv(args.oracle) if args.oracle is not None else None
    svg = render_rd_svg(series, oracle, title=args.title)
    Path(args.out).write_text(svg, encoding="utf-8")
    mirror = args.points_csv
    if mirror is None:
        mirror = str(Path(args.out).with_suffix("")) + "_points.csv"
    Path(mirror).write_text(points_csv(series, oracle), encoding="utf-8")
    print(f"wrote {args.out}")
    print(f"wrote {mirror}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    d_x, d_y, batch = 5, 3, 4
    g_a = Transform.create([d_x, 6, d_y], rng, role="analysis")
    g_s = Transform.create([d_y, 6, d_x], rng, role="synthesis")
    model = FactorizedEntropyModel(d_y, (3, 3, 3), init_scale=1.5, rng=rng)
    x = rng.standard_normal((batch, d_x)) * 2.0
    noise = rng.uniform(-0.5, 0.5, size=(batch, d_y))
    lam = 0.7

    groups = {"analysis": g_a, "synthesis": g_s, "entropy": model}
    failures = 0
    for group_name, owner in groups.items():

        def fn(point, _owner=owner, _group=group_name):
            _owner.load_parameters(point)
            parts, grads_a, grads_s, grads_e = objective_with_grads(
                x, g_a, g_s, model, lam, noise
            )
            grads = {"analysis": grads_a, "synthesis": grads_s, "entropy": grads_e}[_group]
            return parts.loss, grads

        point = {k: v.copy() for k, v in owner.parameters().items()}
        report = grad_check(fn, point, tol=args.tol)
        owner.load_parameters(point)
        status = "ok" if report.passed else "FAIL"
        print(
            f"{group_name:10s} max_rel_err={report.max_rel_err:.3e} "
            f"worst={report.worst_name} {status}"
        )
        if not report.passed:
            failures += 1
    if failures:
        print(f"{failures} parameter group(s) failed the finite-difference check")
        return EXIT_NUMERICAL
    print("all gradients match central differences")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fedntc",
        description="Federated learned-compression testbed (deterministic, numpy)",
    )
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the sweep described by a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default=None, help="output directory (default from config)")
    t.add_argument(
        "--regime", default=None, choices=["local", "fed", "fedavg"],
        help="override the config's regime",
    )
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="measure rates from a stored checkpoint")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--lam", type=float, required=True)
    e.add_argument("--replicate", type=int, default=0)
    e.set_defaults(fn=_cmd_eval)

    o = sub.add_parser("oracle", help="emit an analytic rate-distortion curve as CSV")
    o.add_argument(
        "--variances", required=True,
        help="per-client comma lists separated by ';', e.g. '64,1;1,64'",
    )
    o.add_argument("--dmin", type=float, required=True)
    o.add_argument("--dmax", type=float, required=True)
    o.add_argument("--points", type=int, default=50)
    o.add_argument("--out", default=None, help="CSV path (default stdout)")
    o.set_defaults(fn=_cmd_oracle)

    pa = sub.add_parser("partition", help="non-iid label partition of a dataset file")
    pa.add_argument("--data", required=True)
    pa.add_argument("--format", required=True, choices=["cifar10-binary", "raw-f64"])
    pa.add_argument("--clients", type=int, required=True)
    pa.add_argument("--shards-per-client", type=int, default=2)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--trim", action="store_true", help="drop the sorted tail first")
    pa.add_argument("--json", default=None, help="write the full plan here")
    pa.set_defaults(fn=_cmd_partition)

    pl = sub.add_parser("plot", help="render results.csv (+ optional oracle) to SVG")
    pl.add_argument("--results", required=True)
    pl.add_argument("--oracle", default=None)
    pl.add_argument("--out", required=True)
    pl.add_argument("--points-csv", default=None)
    pl.add_argument("--title", default="rate vs distortion")
    pl.set_defaults(fn=_cmd_plot)

    g = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=1e-4)
    g.set_defaults(fn=_cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, DomainError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, DecodeError, CheckpointError, PartitionError) as e:
        print(f"file error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except FedNTCError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
