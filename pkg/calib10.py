"""Probe: n=2 row-B profile with linear transforms; n=20 capacity-64 check."""
import json
import time

from fedntc.federation import FedConfig, final_point, make_setup, train
from fedntc.sources import SourceSpec, gen_synthetic, heterogeneous_scales

D = 16


def run(regime, n, m, seed, lam, rounds, lr, eval_every, m_eval, a, sig_lo, hidden):
    scales = heterogeneous_scales(n, D, active_dims=a, sigma_active=8.0,
                                  sigma_inactive=sig_lo)
    spec = SourceSpec(D, D, scales, "orthogonal", 0)
    tr = gen_synthetic(spec, m, seed=seed, stream=0)
    ev = gen_synthetic(spec, m_eval, seed=seed, stream=1)
    cfg = FedConfig(rounds=rounds, lam=lam, lr=lr, eval_every=eval_every)
    server, clients = make_setup(tr, ev, D, hidden, seed, cfg,
                                 entropy_init_scale=8.0, regime=regime)
    trace = train(regime, server, clients, cfg)
    fp = final_point(trace, window=10)
    return fp.rate + lam * fp.distortion


if __name__ == "__main__":
    for seed in (5, 6, 7):
        row = {"tag": "n2lin", "seed": seed, "a": 12, "sig_lo": 2.0}
        for regime in ("fed", "local", "fedavg"):
            t0 = time.monotonic()
            row[regime] = round(
                run(regime, 2, 50, seed, 1.0, 400, 3e-3, 20, 256, 12, 2.0, []), 2
            )
            row[f"{regime}_s"] = round(time.monotonic() - t0, 1)
        print(json.dumps(row), flush=True)

    row = {"tag": "cap64", "seed": 5, "a": 1, "sig_lo": 4.0}
    for regime in ("fed", "local", "fedavg"):
        t0 = time.monotonic()
        row[regime] = round(
            run(regime, 20, 50, 5, 1.0, 300, 3e-3, 15, 64, 1, 4.0, [64]), 2
        )
        row[f"{regime}_s"] = round(time.monotonic() - t0, 1)
    print(json.dumps(row), flush=True)
