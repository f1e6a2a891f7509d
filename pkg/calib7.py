"""Probe: n=20, singleton hot dims, cold sigma above the lambda=1 water level."""
import json
import time

from fedntc.federation import FedConfig, final_point, make_setup, train
from fedntc.sources import SourceSpec, gen_synthetic, heterogeneous_scales

D = 16


def run(regime, n, m, seed, lam, rounds, lr, eval_every, m_eval, sig_lo):
    scales = heterogeneous_scales(n, D, active_dims=1, sigma_active=8.0,
                                  sigma_inactive=sig_lo)
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
    for sig_lo, rounds in ((4.0, 150), (3.0, 150), (4.0, 300)):
        row = {"seed": 5, "sig_lo": sig_lo, "rounds": rounds}
        for regime in ("fed", "local", "fedavg"):
            t0 = time.monotonic()
            row[regime] = round(
                run(regime, 20, 50, 5, 1.0, rounds, 3e-3, rounds // 20, 64, sig_lo), 2
            )
            row[f"{regime}_s"] = round(time.monotonic() - t0, 1)
        print(json.dumps(row), flush=True)
