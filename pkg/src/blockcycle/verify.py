"""Brute-force oracles and the fast cross-check suite behind ``blockcycle verify``.

The oracles here deliberately avoid the library's own shortcuts: necklaces
are counted by testing every rotation, orbits are grouped by running the
network, and lcm is taken with ``math.lcm`` rather than a sieve.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterator, Sequence

import numpy as np

from . import dynamics as dyn
from .numtheory import capacity_estimate, log_lcm, necklace_count
from .state import SpinState
from .topology import Network, dense_network, deserialize, serialize


def brute_aperiodic_count(length: int) -> int:
    """Number of binary strings of ``length`` whose cyclic shifts are pairwise distinct."""
    mask = (1 << length) - 1
    x = np.arange(1 << length, dtype=np.int64)
    periodic = np.zeros(x.size, dtype=bool)
    for r in range(1, length):
        rot = ((x >> r) | (x << (length - r))) & mask
        periodic |= rot == x
    return int(np.count_nonzero(~periodic))


def aperiodic_strings(length: int) -> list[tuple[int, ...]]:
    out = []
    for bits in itertools.product((1, -1), repeat=length):
        if all(bits[r:] + bits[:r] != bits for r in range(1, length)):
            out.append(bits)
    return out


def _mono_spins(labels: Sequence[Sequence[int]], d: int) -> np.ndarray:
    flat = np.concatenate([np.asarray(s, dtype=np.int8) for s in labels])
    return np.repeat(flat, d)


def enumerate_orbits(lengths: Sequence[int], d: int = 1) -> list[frozenset[bytes]]:
    """Group every aperiodic monochromatic state into orbits by running a dense network."""
    net = dense_network(lengths, d)
    states = [
        SpinState._from_spins_unchecked(_mono_spins(lab, d))
        for lab in itertools.product(*(aperiodic_strings(ln) for ln in lengths))
    ]
    unseen = {s.packed.tobytes() for s in states}
    orbits = []
    for s in states:
        key = s.packed.tobytes()
        if key not in unseen:
            continue
        orbit = set()
        x = s
        while x.packed.tobytes() not in orbit:
            orbit.add(x.packed.tobytes())
            x = dyn.step(net, x).next
        orbits.append(frozenset(orbit))
        unseen -= orbit
    return orbits


def period_law_violations(lengths: Sequence[int], d: int) -> tuple[int, int]:
    """(labelings checked, labelings where T != 0 or P != lcm)."""
    net = dense_network(lengths, d)
    lcm = math.lcm(*lengths)
    bad = total = 0
    for lab in itertools.product(*(aperiodic_strings(ln) for ln in lengths)):
        rep = dyn.detect_cycle(net, SpinState._from_spins_unchecked(_mono_spins(lab, d)), lcm + 1, max_states=0)
        total += 1
        bad += not (rep.transient == 0 and rep.period == lcm)
    return total, bad


def exhaustive_transients(net: Network, horizon: int) -> list[int | None]:
    """Transient length from every one of the ``2**n`` initial states."""
    n = net.n
    out = []
    for code in range(1 << n):
        bits = (code >> np.arange(n)) & 1
        rep = dyn.detect_cycle(net, SpinState._from_spins_unchecked((2 * bits - 1).astype(np.int8)), horizon, max_states=0)
        out.append(None if rep.horizon_hit else rep.transient)
    return out


def block_survival_exact(d: int, p: float) -> float:
    """Probability that fewer than half of ``d`` spins flip, by summing the binomial pmf directly."""
    return sum(math.comb(d, j) * p**j * (1 - p) ** (d - j) for j in range((d - 1) // 2 + 1))


def run_all() -> Iterator[tuple[str, bool, str]]:
    """Yield ``(name, ok, detail)`` for each fast cross-check."""
    bad = [ln for ln in range(1, 17) if necklace_count(2, ln) != brute_aperiodic_count(ln)]
    yield "necklace counts l<=16", not bad, f"mismatches at {bad}" if bad else "all equal"

    orbits = enumerate_orbits((3, 4))
    est = capacity_estimate((3, 4))
    ok = len(orbits) == est.num_cycles == 6 and all(len(o) == 12 for o in orbits)
    yield "orbit enumeration {3,4}", ok, f"{len(orbits)} orbits, estimate {est.num_cycles}"

    for lengths in ((3, 4), (5,), (2, 3, 5)):
        for d in (1, 2, 3):
            total, nbad = period_law_violations(lengths, d)
            yield f"period law {lengths} d={d}", nbad == 0, f"{total - nbad}/{total} labelings"

    ts = exhaustive_transients(dense_network((4,), 2), 64)
    worst = max((t for t in ts if t is not None), default=None)
    ok = None not in ts and worst is not None and worst <= 4
    yield "dense convergence l=4 d=2", ok, f"max transient {worst} over {len(ts)} states"

    ref = math.log(math.lcm(*range(1, 1001)))
    got = log_lcm(range(1, 1001))
    yield "log_lcm 1..1000", math.isclose(got, ref, rel_tol=1e-12), f"{got:.9f} vs {ref:.9f}"

    worst = 0.0
    for d in (1, 3, 11, 51):
        for p in (0.1, 0.3, 0.45):
            worst = max(worst, abs(dyn.dense_one_step_recovery_prob(d, p, 5) - block_survival_exact(d, p) ** 5))
    yield "dense one-step formula", worst < 1e-12, f"max abs error {worst:.2e}"

    net = dense_network((3, 5), 4)
    yield "serialization round trip", deserialize(serialize(net)) == net, "dense (3,5) d=4"
