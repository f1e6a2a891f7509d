"""Probe: ordering at n=20 with the default variance profile."""
import json
import time

from fedntc.federation import FedConfig, final_point, make_setup, train
from fedntc.sources import SourceSpec, gen_synthetic, heterogeneous_scales

D = 16


def run(regime, n, m, seed, lam, rounds, lr, eval_every, m_eval):
    scales = heterogeneous_scales(n, D)
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
    for seed in (5, 6, 7):
        row = {"seed": seed}
        for regime in ("fed", "local", "fedavg"):
            t0 = time.monotonic()
            row[regime] = round(run(regime, 20, 50, seed, 1.0, 150, 3e-3, 8, 64), 2)
            row[f"{regime}_s"] = round(time.monotonic() - t0, 1)
        print(json.dumps(row), flush=True)
