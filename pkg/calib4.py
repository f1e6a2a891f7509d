"""Probe: row B fedavg leg at the contract's 10 joint local steps."""
import json

import numpy as np

from fedntc.federation import FedConfig, final_point, make_setup, train
from fedntc.sources import SourceSpec, gen_synthetic, heterogeneous_scales

D = 16


def run(regime, n, m, seed, lam, rounds, lr, a, sig_lo, avg_steps):
    scales = heterogeneous_scales(n, D, active_dims=a, sigma_active=8.0, sigma_inactive=sig_lo)
    spec = SourceSpec(D, D, scales, "orthogonal", 0)
    tr = gen_synthetic(spec, m, seed=seed, stream=0)
    ev = gen_synthetic(spec, 256, seed=seed, stream=1)
    cfg = FedConfig(rounds=rounds, lam=lam, lr=lr, fedavg_local_steps=avg_steps,
                    eval_every=max(1, rounds // 20))
    server, clients = make_setup(tr, ev, D, [32], seed, cfg,
                                 entropy_init_scale=8.0, regime=regime)
    trace = train(regime, server, clients, cfg)
    fp = final_point(trace, window=10)
    return fp.rate + lam * fp.distortion


if __name__ == "__main__":
    for seed in (5, 6, 7):
        loss = run("fedavg", 2, 50, seed, 1.0, 400, 3e-3, 12, 2.0, avg_steps=10)
        print(json.dumps({"row": "B", "avg_steps": 10, "seed": seed,
                          "fedavg": round(loss, 2)}), flush=True)
