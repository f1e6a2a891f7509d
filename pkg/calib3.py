import json

import numpy as np

from fedntc.federation import FedConfig, final_point, make_setup, train
from fedntc.sources import SourceSpec, gen_synthetic, heterogeneous_scales


def run(regime, seed, a, sig_lo, rounds, lr, lam=1.0, m=50, avg_steps=20):
    scales = heterogeneous_scales(2, 16, active_dims=a, sigma_active=8.0, sigma_inactive=sig_lo)
    spec = SourceSpec(16, 16, scales, "orthogonal", 0)
    tr = gen_synthetic(spec, m, seed=seed, stream=0)
    ev = gen_synthetic(spec, 256, seed=seed, stream=1)
    cfg = FedConfig(rounds=rounds, lam=lam, lr=lr, fedavg_local_steps=avg_steps,
                    eval_every=max(1, rounds // 20))
    server, clients = make_setup(tr, ev, 16, [32], seed, cfg,
                                 entropy_init_scale=8.0, regime=regime)
    trace = train(regime, server, clients, cfg)
    fp = final_point(trace, window=10)
    return round(fp.rate + lam * fp.distortion, 2)


if __name__ == "__main__":
    for tag, a, sig_lo in [("B", 12, 2.0), ("G", 8, 2.0)]:
        row = {"tag": tag, "a": a, "sig_lo": sig_lo}
        n_fl = 0
        n_fa = 0
        for seed in (5, 6, 7):
            f = run("fed", seed, a, sig_lo, 400, 3e-3)
            l = run("local", seed, a, sig_lo, 400, 3e-3)
            g = run("fedavg", seed, a, sig_lo, 400, 3e-3)
            row[f"s{seed}"] = {"fed": f, "local": l, "fedavg": g}
            n_fl += f <= l
            n_fa += f < g
        row["fed_le_local"] = n_fl
        row["fed_lt_fedavg"] = n_fa
        print(json.dumps(row), flush=True)
