import json
import time

import numpy as np

from fedntc.federation import FedConfig, final_point, make_setup, train
from fedntc.sources import SourceSpec, gen_synthetic, heterogeneous_scales


def run(regime, seed, a, sig_lo, rounds, lr, lam=1.0, m=50):
    scales = heterogeneous_scales(2, 16, active_dims=a, sigma_active=8.0, sigma_inactive=sig_lo)
    spec = SourceSpec(16, 16, scales, "orthogonal", 0)
    tr = gen_synthetic(spec, m, seed=seed, stream=0)
    ev = gen_synthetic(spec, 256, seed=seed, stream=1)
    cfg = FedConfig(rounds=rounds, lam=lam, lr=lr, eval_every=max(1, rounds // 20))
    server, clients = make_setup(tr, ev, 16, [32], seed, cfg,
                                 entropy_init_scale=8.0, regime=regime)
    trace = train(regime, server, clients, cfg)
    fp = final_point(trace, window=10)
    return round(fp.rate + lam * fp.distortion, 2)


if __name__ == "__main__":
    grid = [
        ("A", 12, 0.5, 400, 3e-3),
        ("B", 12, 2.0, 400, 3e-3),
        ("C", 14, 2.0, 400, 3e-3),
        ("D", 10, 2.0, 400, 3e-3),
        ("E", 8, 4.0, 400, 3e-3),
        ("F", 12, 2.0, 1200, 1e-3),
    ]
    for tag, a, sig_lo, rounds, lr in grid:
        row = {"tag": tag, "a": a, "sig_lo": sig_lo, "rounds": rounds, "lr": lr}
        for seed in (7, 8):
            f = run("fed", seed, a, sig_lo, rounds, lr)
            l = run("local", seed, a, sig_lo, rounds, lr)
            row[f"s{seed}"] = {"fed": f, "local": l, "ok": f <= l}
        print(json.dumps(row), flush=True)
