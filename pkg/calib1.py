import json
import time

import numpy as np

from fedntc.federation import FedConfig, final_point, make_setup, train
from fedntc.sources import SourceSpec, gen_synthetic, heterogeneous_scales


def run(regime, seed, sig_lo, rounds, lr, lam=1.0, m=50, widths=(32,)):
    scales = heterogeneous_scales(2, 16, active_dims=8, sigma_active=8.0, sigma_inactive=sig_lo)
    spec = SourceSpec(16, 16, scales, "orthogonal", 0)
    tr = gen_synthetic(spec, m, seed=seed, stream=0)
    ev = gen_synthetic(spec, 256, seed=seed, stream=1)
    rr = rounds * 2 if regime == "fedavg" else rounds
    cfg = FedConfig(rounds=rr, lam=lam, lr=lr, eval_every=max(1, rr // 20))
    server, clients = make_setup(tr, ev, 16, list(widths), seed, cfg,
                                 entropy_init_scale=8.0, regime=regime)
    trace = train(regime, server, clients, cfg)
    fp = final_point(trace, window=10)
    return fp.rate + lam * fp.distortion, fp.rate, fp.distortion


results = []
t00 = time.time()
for sig_lo in (1.0, 2.0):
    for rounds in (400,):
        for lr in (3e-3,):
            for seed in (7, 8, 9):
                row = {"sig_lo": sig_lo, "rounds": rounds, "lr": lr, "seed": seed}
                for regime in ("fed", "local", "fedavg"):
                    t0 = time.time()
                    loss, r, d = run(regime, seed, sig_lo, rounds, lr)
                    row[regime] = round(loss, 2)
                    row[regime + "_rd"] = (round(r, 1), round(d, 1))
                    row[regime + "_s"] = round(time.time() - t0)
                results.append(row)
                print(json.dumps(row), flush=True)
print("total %.0fs" % (time.time() - t00))
