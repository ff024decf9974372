"""Necklace counts, aperiodicity, and log-lcm via a smallest-prime-factor sieve."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .state import parse_signs


def _spf_sieve(limit: int) -> np.ndarray:
    spf = np.zeros(limit + 1, dtype=np.int64)
    if limit >= 1:
        spf[1] = 1
    for p in range(2, math.isqrt(limit) + 1):
        if spf[p] == 0:
            block = spf[p * p :: p]
            block[block == 0] = p
    rest = np.flatnonzero(spf == 0)
    spf[rest[rest >= 2]] = rest[rest >= 2]
    return spf


_SIEVE = _spf_sieve(1 << 10)


def smallest_prime_factors(limit: int) -> np.ndarray:
    """Shared read-only table with ``spf[k]`` the least prime dividing ``k``."""
    global _SIEVE
    if limit >= _SIEVE.size:
        size = max(limit, 2 * _SIEVE.size)
        table = _spf_sieve(size)
        table.flags.writeable = False
        _SIEVE = table
    return _SIEVE


def factorize(n: int) -> dict[int, int]:
    if n < 1:
        raise ValueError("factorize needs a positive integer")
    out: dict[int, int] = {}
    if n < max(_SIEVE.size, 1 << 20):
        spf = smallest_prime_factors(n)
        while n > 1:
            p = int(spf[n])
            out[p] = out.get(p, 0) + 1
            n //= p
        return out
    p = 2
    while p * p <= n:
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def mobius(n: int) -> int:
    if n < 1:
        raise ValueError("mobius is defined for n >= 1")
    exps = factorize(n).values()
    if any(e > 1 for e in exps):
        return 0
    return -1 if len(exps) % 2 else 1


def divisors(n: int) -> list[int]:
    divs = [1]
    for p, e in factorize(n).items():
        divs = [q * p**k for q in divs for k in range(e + 1)]
    return sorted(divs)


@lru_cache(maxsize=4096)
def necklace_count(k: int, length: int) -> int:
    """Number of aperiodic ``k``-ary strings of the given length (exact)."""
    if k < 1 or length < 1:
        raise ValueError("alphabet size and length must be >= 1")
    return sum(mobius(j) * k ** (length // j) for j in divisors(length))


def is_aperiodic(s: str | Sequence[int]) -> bool:
    """True iff no rotation by 1..len-1 maps the string to itself."""
    signs = parse_signs(s)
    if not signs:
        raise ValueError("empty string")
    return minimal_period(signs) == len(signs)


def minimal_period(signs: Sequence[int]) -> int:
    """Smallest ``r >= 1`` with ``rotate(signs, r) == signs``."""
    t = tuple(signs)
    n = len(t)
    for r in divisors(n):
        if t[r:] + t[:r] == t:
            return r
    return n  # unreachable: r = n always matches


def random_aperiodic(length: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform aperiodic sign string by rejection sampling."""
    if length < 1:
        raise ValueError("length must be >= 1")
    while True:
        s = tuple(int(v) for v in rng.choice(np.array([-1, 1], dtype=np.int8), size=length))
        if minimal_period(s) == length:
            return s


def log_lcm(values: Iterable[int]) -> float:
    """Natural log of ``lcm(values)`` from prime valuations; 0 for the empty set."""
    arr = np.unique(np.fromiter(values, dtype=np.int64))
    if arr.size == 0:
        return 0.0
    if arr[0] < 1:
        raise ValueError("log_lcm needs positive integers")
    spf = smallest_prime_factors(int(arr[-1]))
    best: dict[int, int] = {}
    rem = arr.copy()
    # peel one prime power off every element per pass
    while True:
        live = rem > 1
        if not live.any():
            break
        vals = rem[live]
        ps = spf[vals]
        exps = np.zeros_like(vals)
        cur = vals.copy()
        while True:
            div = cur % ps == 0
            if not div.any():
                break
            exps[div] += 1
            cur[div] //= ps[div]
        rem[live] = cur
        order = np.lexsort((exps, ps))
        ps_s, ex_s = ps[order], exps[order]
        last = np.r_[ps_s[1:] != ps_s[:-1], True]
        for p, e in zip(ps_s[last].tolist(), ex_s[last].tolist()):
            if e > best.get(p, 0):
                best[p] = e
    return float(sum(e * math.log(p) for p, e in best.items()))


def psi_prediction(m: float, delta: float) -> float:
    """Predicted log-lcm of a random subset of {1..m} with inclusion rate ``delta``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return m * delta * math.log(1.0 / delta) / (1.0 - delta)


@dataclass(frozen=True)
class CapacityEstimate:
    log_num_states: float
    log_period: float
    log_num_cycles: float
    num_states: int
    period: int

    @property
    def num_cycles(self) -> int:
        """Exact orbit count; integral whenever every length admits aperiodic strings."""
        q, r = divmod(self.num_states, self.period)
        if r:
            raise ArithmeticError("state count is not a multiple of the period")
        return q

    def log2(self) -> tuple[float, float, float]:
        c = 1.0 / math.log(2.0)
        return self.log_num_states * c, self.log_period * c, self.log_num_cycles * c


def capacity_estimate(lengths: Sequence[int]) -> CapacityEstimate:
    """Aperiodic monochromatic states, orbit period and orbit count for given cycle lengths."""
    lengths = [int(v) for v in lengths]
    if not lengths or min(lengths) < 1:
        raise ValueError("lengths must be a non-empty list of positive integers")
    num_states = math.prod(necklace_count(2, ln) for ln in lengths)
    log_states = sum(math.log(necklace_count(2, ln)) for ln in lengths)
    log_period = log_lcm(lengths)
    return CapacityEstimate(
        log_num_states=log_states,
        log_period=log_period,
        log_num_cycles=log_states - log_period,
        num_states=num_states,
        period=math.lcm(*lengths),
    )


def coprime_lengths(m: int) -> list[int]:
    """Largest power of each prime ``p <= m`` that does not exceed ``m``."""
    if m < 2:
        raise ValueError("m must be >= 2")
    spf = smallest_prime_factors(m)
    out = []
    for p in range(2, m + 1):
        if spf[p] == p:
            q = p
            while q * p <= m:
                q *= p
            out.append(q)
    return out
