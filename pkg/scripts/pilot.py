"""Pilot runs that fix the Monte-Carlo thresholds used by the acceptance suite.

Run once with ``python3 scripts/pilot.py``; the printed numbers are what the
acceptance thresholds were chosen against. The output of the run used for
this repository is kept in ``scripts/pilot_output.txt``.
"""

import math
import time

import numpy as np

from blockcycle import dynamics as dyn
from blockcycle.experiments import NoiseSpec, trial_revival
from blockcycle.numtheory import random_aperiodic
from blockcycle.state import BlockLabels
from blockcycle.topology import add_adversarial_edges, sparse_network


def weak_pilot(seed=2024, trials=50, lengths=(50, 75), d=2000, q=3, p=0.3):
    k_theory = math.ceil(math.sqrt(d) / math.log(d))
    dists = []
    t0 = time.perf_counter()
    for trial in range(trials):
        topo, flags, noise = [np.random.default_rng(c) for c in np.random.SeedSequence([seed, trial]).spawn(3)]
        net = add_adversarial_edges(sparse_network(lengths, d, 3, topo), q, flags)
        labels = BlockLabels(tuple(random_aperiodic(ln, flags) for ln in lengths))
        orbit = dyn.ReferenceOrbit(net.partition, labels)
        for k in (0, k_theory):
            rec = trial_revival(net, orbit, NoiseSpec(p), mode="weak", k=k, rng=np.random.default_rng([seed, trial, 7]))
            dists.append((trial, k, rec.revived, rec.T))
    print(f"weak pilot d={d} q={q} p={p} k_theory={k_theory} ({time.perf_counter() - t0:.1f}s)")
    for k in (0, k_theory):
        ok = [r for r in dists if r[1] == k]
        print(f"  k={k}: tracked {sum(r[2] for r in ok)}/{len(ok)}, max T={max(r[3] for r in ok if r[2])}")


def campaign_pilot():
    from blockcycle.experiments import CampaignConfig, run_campaign

    for cfg in (
        CampaignConfig("fig1a", seed=11, trials=50),
        CampaignConfig("fig1a", seed=12, d_values=(250,), p_values=(0.45, 0.49), trials=50),
        CampaignConfig("adversarial_nodes", seed=11, d_values=(1000, 2000)),
        CampaignConfig("fig1b", seed=11, trials=20),
        CampaignConfig("global_convergence", seed=11, d_values=(100, 1000, 10000)),
    ):
        t0 = time.perf_counter()
        table = run_campaign(cfg)
        print(f"{cfg.experiment} ({time.perf_counter() - t0:.1f}s)")
        print(table.summary())


if __name__ == "__main__":
    weak_pilot()
    campaign_pilot()
