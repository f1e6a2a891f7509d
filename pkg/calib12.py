"""Probe u3: cold sigma alternates 4/8, hot is 2x cold on a rotating dim."""
import json
import time

import numpy as np

from fedntc.federation import FedConfig, final_point, make_setup, train
from fedntc.sources import SourceSpec, gen_synthetic

D = 16
N = 20


def build_scales():
    scales = np.zeros((N, D))
    for i in range(N):
        cold = 4.0 if i % 2 == 0 else 8.0
        scales[i, :] = cold
        scales[i, i % D] = 2.0 * cold
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
    scales = build_scales()
    for seed in (5, 6, 7):
        row = {"tag": "u3", "seed": seed}
        for regime in ("fed", "local", "fedavg"):
            t0 = time.monotonic()
            row[regime] = round(
                run(regime, scales, 50, seed, 1.0, 300, 3e-3, 15, 64), 2
            )
            row[f"{regime}_s"] = round(time.monotonic() - t0, 1)
        print(json.dumps(row), flush=True)
