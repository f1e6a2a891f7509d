"""Probe: break per-client total variance so no shared map can equalize.

u1: hot sigma alternates 8/16 across clients (singleton hot dims, cold 4).
u2: hot sigma 8 everywhere, cold sigma alternates 4/5 across clients.
"""
import json
import time

import numpy as np

from fedntc.federation import FedConfig, final_point, make_setup, train
from fedntc.sources import SourceSpec, gen_synthetic

D = 16
N = 20


def build_scales(variant):
    scales = np.zeros((N, D))
    for i in range(N):
        if variant == "u1":
            cold, hot = 4.0, (8.0 if i % 2 == 0 else 16.0)
        else:
            cold, hot = (4.0 if i % 2 == 0 else 5.0), 8.0
        scales[i, :] = cold
        scales[i, i % D] = hot
    return scales


def run(regime, scales, m, seed, lam, rounds, lr, eval_every, m_eval):
    spec = SourceSpec(D, D, scales, "orthogonal", 0)
    tr = gen_synthetic(spec, m, seed=seed, stream=0)
    ev = gen_synthetic(spec, m_eval, seed=seed, stream=1)
    cfg = FedConfig(rounds=rounds, lam=lam, lr=lr, eval_every=eval_every)
    server, clients = make_setup(tr, ev, D, [32], seed, cfg,
                                 entropy_init_scale=8.0, regime=regime)
    trace = train(regime, server, clients, cfg)
    fp = final_point(trace, window=10)
    return fp.rate + lam * fp.distortion


if __name__ == "__main__":
    for variant in ("u1", "u2"):
        scales = build_scales(variant)
        row = {"tag": variant, "seed": 5}
        for regime in ("fed", "local", "fedavg"):
            t0 = time.monotonic()
            row[regime] = round(
                run(regime, scales, 50, 5, 1.0, 300, 3e-3, 15, 64), 2
            )
            row[f"{regime}_s"] = round(time.monotonic() - t0, 1)
        print(json.dumps(row), flush=True)
