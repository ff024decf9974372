"""Synchronous sign-threshold dynamics, cycle detection and recovery checks."""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.stats import binom

from .numtheory import minimal_period
from .state import BlockLabels, BlockPartition, SpinState, format_signs
from .topology import Network

TIE_RULES = ("keep", "plus")


class UpdateReport(NamedTuple):
    next: SpinState
    ties: int


def local_fields(net: Network, spins: np.ndarray) -> np.ndarray:
    return net.matrix @ spins.astype(np.int32)


def next_spins(net: Network, spins: np.ndarray, tie_rule: str = "keep") -> tuple[np.ndarray, int]:
    """One synchronous update on an unpacked +-1 vector; returns (new spins, ties).

    A zero field keeps the neuron's previous value (``tie_rule="keep"``) or
    yields +1 (``"plus"``, used only for cross-checks). Anti-majority neurons
    negate the result after the tie has been resolved.
    """
    h = local_fields(net, spins)
    zero = h == 0
    if tie_rule == "keep":
        tie_value = spins
    elif tie_rule == "plus":
        tie_value = 1
    else:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    out = np.where(h > 0, 1, np.where(zero, tie_value, -1)).astype(np.int8)
    if net.anti_majority.any():
        out[net.anti_majority] *= -1
    return out, int(zero.sum())


def _check_dims(net: Network, x: SpinState) -> None:
    if x.n != net.n:
        raise ValueError(f"state has {x.n} spins, network has {net.n} neurons")


def step(net: Network, x: SpinState, tie_rule: str = "keep") -> UpdateReport:
    _check_dims(net, x)
    out, ties = next_spins(net, x.spins(), tie_rule)
    return UpdateReport(SpinState._from_spins_unchecked(out), ties)


def iterate(net: Network, x0: SpinState, t: int) -> SpinState:
    if t < 0:
        raise ValueError("t must be >= 0")
    _check_dims(net, x0)
    s = x0.spins()
    for _ in range(t):
        s, _ = next_spins(net, s)
    return SpinState._from_spins_unchecked(s)


def trajectory(net: Network, x0: SpinState, steps: int) -> Iterator[tuple[int, SpinState, int]]:
    """Yield ``(t, state, ties)`` for t = 0..steps; ties counts zero fields of the step into t."""
    _check_dims(net, x0)
    s = x0.spins()
    yield 0, x0, 0
    for t in range(1, steps + 1):
        s, ties = next_spins(net, s)
        yield t, SpinState._from_spins_unchecked(s), ties


@dataclass
class CycleReport:
    transient: int | None
    period: int | None
    horizon_hit: bool
    states: list[SpinState] | None = field(default=None, repr=False)

    def as_record(self) -> dict:
        return {"T": self.transient, "P": self.period, "horizon_hit": self.horizon_hit}


def _cycle_states(net: Network, x0: SpinState, T: int, P: int, max_states: int) -> list[SpinState] | None:
    if P > max_states:
        return None
    s = iterate(net, x0, T).spins()
    out = []
    for _ in range(P):
        out.append(SpinState._from_spins_unchecked(s))
        s, _ = next_spins(net, s)
    return out


def detect_cycle(
    net: Network, x0: SpinState, horizon: int, method: str = "hash", max_states: int = 4096
) -> CycleReport:
    """Minimal transient ``T`` and period ``P`` of the orbit of ``x0``.

    ``method="hash"`` stores every visited packed state and sees cycles with
    ``T + P <= horizon``. ``method="brent"`` uses constant memory and at most
    ``3 * horizon`` updates. Cycle states are returned when ``P <= max_states``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    _check_dims(net, x0)
    if method == "hash":
        found = _detect_hash(net, x0, horizon)
    elif method == "brent":
        found = _detect_brent(net, x0, horizon)
    else:
        raise ValueError(f"unknown method {method!r}")
    if found is None:
        return CycleReport(None, None, True)
    T, P = found
    return CycleReport(T, P, False, _cycle_states(net, x0, T, P, max_states))


def _detect_hash(net: Network, x0: SpinState, horizon: int) -> tuple[int, int] | None:
    seen: dict[bytes, int] = {}
    s = x0.spins()
    for t in range(horizon + 1):
        key = np.packbits(s > 0, bitorder="little").tobytes()
        if key in seen:
            return seen[key], t - seen[key]
        seen[key] = t
        s, _ = next_spins(net, s)
    return None


def _detect_brent(net: Network, x0: SpinState, horizon: int) -> tuple[int, int] | None:
    budget = 3 * horizon
    f = lambda s: next_spins(net, s)[0]  # noqa: E731
    power = lam = 1
    tortoise = x0.spins()
    hare = f(tortoise)
    used = 1
    while not np.array_equal(tortoise, hare):
        if power == lam:
            tortoise = hare
            power *= 2
            lam = 0
        hare = f(hare)
        lam += 1
        used += 1
        if used > budget:
            return None
    tortoise = hare = x0.spins()
    for _ in range(lam):
        hare = f(hare)
    mu = 0
    while not np.array_equal(tortoise, hare):
        tortoise, hare = f(tortoise), f(hare)
        mu += 1
    return mu, lam


def _crt(residues: list[int], moduli: list[int]) -> int | None:
    a, m = 0, 1
    for r, mod in zip(residues, moduli):
        g = math.gcd(m, mod)
        if (r - a) % g:
            return None
        m_g, mod_g = m // g, mod // g
        k = ((r - a) // g * pow(m_g, -1, mod_g)) % mod_g if mod_g > 1 else 0
        a += m * k
        m = m * mod_g
        a %= m
    return a


@dataclass(frozen=True)
class ReferenceOrbit:
    """Monochromatic orbit obtained by rotating every cycle's label string.

    The state at time ``t`` gives block ``j`` of a cycle the label that block
    ``j - t`` carried at time 0, matching one application of the update map
    on a block-cyclic network.
    """

    partition: BlockPartition
    labels: BlockLabels

    @property
    def period(self) -> int:
        return math.lcm(*self.partition.cycle_lengths)

    @cached_property
    def label_periods(self) -> tuple[int, ...]:
        return tuple(minimal_period(s) for s in self.labels.strings)

    @property
    def minimal_period(self) -> int:
        return math.lcm(*self.label_periods)

    @cached_property
    def _layout(self):
        part = self.partition
        flat = self.labels.flat()
        cyc = np.repeat(np.arange(len(part.cycle_lengths)), part.cycle_lengths)
        offs = np.asarray(part.cycle_offsets, dtype=np.int64)[cyc]
        lens = np.asarray(part.cycle_lengths, dtype=np.int64)[cyc]
        local = np.arange(part.total_blocks) - offs
        return flat, cyc, offs, lens, local

    def labels_at(self, t: int) -> np.ndarray:
        flat, cyc, offs, lens, local = self._layout
        shift = np.array([t % ln for ln in self.partition.cycle_lengths], dtype=np.int64)[cyc]
        return flat[offs + (local - shift) % lens]

    def spins_at(self, t: int) -> np.ndarray:
        return np.repeat(self.labels_at(t), self.partition.block_size)

    def state_at(self, t: int) -> SpinState:
        return SpinState._from_spins_unchecked(self.spins_at(t))

    def phase_of(self, block_labels: np.ndarray) -> int | None:
        """Phase ``s`` in ``[0, minimal_period)`` with ``labels_at(s) == block_labels``, else None."""
        residues = []
        for off, ln, string, per in zip(
            self.partition.cycle_offsets, self.partition.cycle_lengths, self.labels.strings, self.label_periods
        ):
            obs = block_labels[off : off + ln]
            hay = format_signs(string) * 2
            pos = hay.find(format_signs(obs)) if np.all(obs != 0) else -1
            if pos < 0:
                return None
            residues.append((ln - pos) % per)
        return _crt(residues, list(self.label_periods))

    def __str__(self) -> str:
        return f"ReferenceOrbit({self.labels}, P={self.period})"


def reference_orbit(part: BlockPartition, labels: BlockLabels | str, allow_periodic: bool = False) -> ReferenceOrbit:
    if not isinstance(labels, BlockLabels):
        labels = BlockLabels.parse(labels)
    labels.check(part)
    if not allow_periodic:
        for s in labels.strings:
            if minimal_period(s) != len(s):
                raise ValueError(
                    f"label string {format_signs(s)} is periodic; pass allow_periodic=True to waive"
                )
    return ReferenceOrbit(part, labels)


class Recovery(NamedTuple):
    recovered: bool
    T: int | None


class Tracking(NamedTuple):
    tracked: bool
    T: int | None
    s: int | None


def _exact_phase(orbit: ReferenceOrbit, spins: np.ndarray) -> int | None:
    d = orbit.partition.block_size
    sums = spins.reshape(-1, d).sum(axis=1, dtype=np.int64)
    if np.any(np.abs(sums) != d):
        return None
    return orbit.phase_of(np.sign(sums).astype(np.int8))


def exact_recovery(net: Network, orbit: ReferenceOrbit, x: SpinState, horizon: int) -> Recovery:
    """First ``t <= horizon`` at which the trajectory of ``x`` sits on ``orbit``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    _check_dims(net, x)
    T, _, _ = _run_exact(net, orbit, x.spins(), horizon)
    return Recovery(T is not None, T)


def _run_exact(net: Network, orbit: ReferenceOrbit, s: np.ndarray, horizon: int):
    ties = 0
    for t in range(horizon + 1):
        phase = _exact_phase(orbit, s)
        if phase is not None:
            return t, phase, ties
        if t < horizon:
            s, tie = next_spins(net, s)
            ties += tie
    return None, None, ties


def _keep_mask(part: BlockPartition, ignore) -> np.ndarray:
    keep = np.ones(part.n, dtype=bool)
    if ignore is not None:
        arr = np.asarray(ignore)
        if arr.dtype == bool:
            keep = ~arr
        else:
            keep[arr.astype(np.int64)] = False
    # a block whose neurons are all ignored is compared in full
    blocks = keep.reshape(-1, part.block_size)
    blocks[~blocks.any(axis=1)] = True
    return keep


def weak_tracking(
    net: Network,
    orbit: ReferenceOrbit,
    x: SpinState,
    k: int,
    horizon: int,
    ignore=None,
    window: int | None = None,
) -> Tracking:
    """Search for ``T <= horizon`` and phase ``s`` with block-max distance at most ``k``.

    A candidate ``(T, s)`` must keep ``d_BM(F^{T+t}(x), c_{s+t}) <= k`` on
    every non-ignored neuron for ``t`` in ``[0, window]`` (default
    ``2 P + horizon`` with ``P`` the orbit's minimal period). Matching a phase of the orbit means the block-majority
    pattern at ``T`` is itself a rotation of the reference labels.
    """
    if k < 0 or horizon < 1:
        raise ValueError("need k >= 0 and horizon >= 1")
    _check_dims(net, x)
    result, _ = _run_weak(net, orbit, x.spins(), k, horizon, _keep_mask(orbit.partition, ignore), window)
    return result


def _run_weak(net, orbit, s, k, horizon, keep, window):
    part = orbit.partition
    d = part.block_size
    if window is None:
        window = 2 * orbit.minimal_period + horizon
    kept = keep.reshape(-1, d).sum(axis=1)
    brute = 2 * k >= int(kept.min())
    P = orbit.minimal_period
    if brute and P > 100_000:
        raise ValueError("k too large for majority phase inference and orbit too long for brute force")
    keep_i8 = keep.astype(np.int8)

    def dist(ks: np.ndarray, phase: int) -> int:
        lab = orbit.labels_at(phase).astype(np.int64)
        return int(((kept - lab * ks) // 2).max())

    def find_phase(ks: np.ndarray) -> int | None:
        if brute:
            for ph in range(P):
                if dist(ks, ph) <= k:
                    return ph
            return None
        ph = orbit.phase_of(np.sign(ks).astype(np.int8))
        if ph is not None and dist(ks, ph) <= k:
            return ph
        return None

    ties = 0
    cand: tuple[int, int] | None = None
    t = 0
    while True:
        ks = (s * keep_i8).reshape(-1, d).sum(axis=1, dtype=np.int64)
        if cand is not None and dist(ks, (cand[1] + t - cand[0]) % P) > k:
            cand = None
        if cand is None:
            if t > horizon:
                return Tracking(False, None, None), ties
            ph = find_phase(ks)
            if ph is not None:
                cand = (t, ph)
        if cand is not None and t - cand[0] >= window:
            return Tracking(True, cand[0], cand[1]), ties
        s, tie = next_spins(net, s)
        ties += tie
        t += 1


def dense_one_step_recovery_prob(d: int, p: float, n_blocks: int) -> float:
    """Probability that no block of a dense network loses its majority under flip noise ``p``."""
    if d < 1 or d % 2 == 0:
        raise ValueError("d must be a positive odd integer")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n_blocks < 0:
        raise ValueError("n_blocks must be >= 0")
    survive = float(binom.cdf((d - 1) // 2, d, p))
    return survive**n_blocks
