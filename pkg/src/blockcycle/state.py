"""Spin states, block partitions and block-level distances.

States are bit-packed: neuron ``i`` lives in byte ``i // 8`` at bit ``i % 8``
(little bit order), with ``+1`` stored as 1 and ``-1`` as 0. Padding bits in
the last byte are always zero, so two equal states have equal bytes. The
neuron order is the canonical block layout of :class:`BlockPartition`:
cycle by cycle, block by block, ``d`` contiguous neurons per block.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

_SIGN_CHARS = {"+": 1, "-": -1, "−": -1}


def parse_signs(text: str | Iterable[int]) -> tuple[int, ...]:
    """Turn ``"+--"`` (or an iterable of +-1) into a tuple of ints."""
    if isinstance(text, str):
        try:
            return tuple(_SIGN_CHARS[c] for c in text if not c.isspace())
        except KeyError as exc:
            raise ValueError(f"bad sign character {exc.args[0]!r} in {text!r}") from None
    out = tuple(int(v) for v in text)
    if any(v not in (-1, 1) for v in out):
        raise ValueError("signs must be -1 or +1")
    return out


def format_signs(signs: Iterable[int]) -> str:
    return "".join("+" if s > 0 else "-" for s in signs)


class SpinState:
    """Immutable vector of ``n`` spins in {-1, +1}, stored bit-packed."""

    __slots__ = ("n", "_packed")

    def __init__(self, packed: np.ndarray | bytes, n: int):
        buf = np.frombuffer(bytes(packed), dtype=np.uint8).copy()
        if n < 0 or buf.size != (n + 7) // 8:
            raise ValueError(f"packed buffer of {buf.size} bytes does not hold {n} spins")
        tail = n % 8
        if tail and buf[-1] >> tail:
            raise ValueError("padding bits must be zero")
        buf.flags.writeable = False
        self.n = n
        self._packed = buf

    @classmethod
    def from_spins(cls, spins: Sequence[int] | np.ndarray | str) -> SpinState:
        if isinstance(spins, str):
            spins = parse_signs(spins)
        arr = np.asarray(spins)
        if arr.ndim != 1:
            raise ValueError("spins must be one-dimensional")
        if arr.size and not np.all((arr == 1) | (arr == -1)):
            raise ValueError("every spin must be exactly -1 or +1")
        return cls(np.packbits(arr > 0, bitorder="little"), arr.size)

    @classmethod
    def _from_spins_unchecked(cls, spins: np.ndarray) -> SpinState:
        obj = cls.__new__(cls)
        buf = np.packbits(spins > 0, bitorder="little")
        buf.flags.writeable = False
        obj.n = int(spins.size)
        obj._packed = buf
        return obj

    @classmethod
    def constant(cls, n: int, sign: int = 1) -> SpinState:
        return cls.from_spins(np.full(n, sign, dtype=np.int8))

    @property
    def packed(self) -> np.ndarray:
        return self._packed

    def spins(self) -> np.ndarray:
        bits = np.unpackbits(self._packed, count=self.n, bitorder="little")
        return bits.astype(np.int8) * 2 - 1

    def to_hex(self) -> str:
        return f"{self.n}:{self._packed.tobytes().hex()}"

    @classmethod
    def from_hex(cls, text: str) -> SpinState:
        head, sep, body = text.strip().partition(":")
        if not sep:
            raise ValueError("expected '<n>:<hex>'")
        return cls(bytes.fromhex(body), int(head))

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpinState):
            return NotImplemented
        return self.n == other.n and np.array_equal(self._packed, other._packed)

    def __hash__(self) -> int:
        return hash((self.n, self._packed.tobytes()))

    def __neg__(self) -> SpinState:
        return SpinState._from_spins_unchecked(-self.spins())

    def __repr__(self) -> str:
        if self.n <= 64:
            return f"SpinState({format_signs(self.spins())!r})"
        return f"SpinState(n={self.n}, hex={self._packed[:8].tobytes().hex()}...)"


@dataclass(frozen=True)
class BlockPartition:
    """Canonical partition of ``d * N_blocks`` neurons into blocks and cycles."""

    block_size: int
    cycle_lengths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "cycle_lengths", tuple(int(v) for v in self.cycle_lengths))
        if not self.cycle_lengths:
            raise ValueError("at least one block cycle is required")
        if self.block_size < 1:
            raise ValueError("block size must be >= 1")
        if min(self.cycle_lengths) < 1:
            raise ValueError("cycle lengths must be >= 1")

    @property
    def total_blocks(self) -> int:
        return sum(self.cycle_lengths)

    @property
    def n(self) -> int:
        return self.block_size * self.total_blocks

    @cached_property
    def cycle_offsets(self) -> tuple[int, ...]:
        """Index of the first block of every cycle."""
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.cycle_lengths)[:-1]]))

    @property
    def cycles(self) -> list[range]:
        return [range(o, o + ln) for o, ln in zip(self.cycle_offsets, self.cycle_lengths)]

    def block_range(self, block: int) -> range:
        d = self.block_size
        return range(block * d, (block + 1) * d)

    @cached_property
    def predecessor(self) -> np.ndarray:
        """``predecessor[b]`` is the block feeding block ``b``."""
        pred = np.empty(self.total_blocks, dtype=np.int64)
        for off, ln in zip(self.cycle_offsets, self.cycle_lengths):
            idx = np.arange(ln)
            pred[off + idx] = off + (idx - 1) % ln
        return pred

    def block_of(self, neuron: int | np.ndarray):
        return np.asarray(neuron) // self.block_size


def block_partition(cycle_lengths: Sequence[int], d: int) -> BlockPartition:
    return BlockPartition(d, tuple(cycle_lengths))


@dataclass(frozen=True)
class BlockLabels:
    """One sign string per block cycle, one sign per block."""

    strings: tuple[tuple[int, ...], ...]

    @classmethod
    def parse(cls, labels: str | Sequence[str | Sequence[int]]) -> BlockLabels:
        """Accepts ``"+--|-+"``, ``["+--", "-+"]`` or nested +-1 sequences."""
        if isinstance(labels, str):
            labels = labels.replace(",", "|").split("|")
        return cls(tuple(parse_signs(s) for s in labels))

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.strings)

    def flat(self) -> np.ndarray:
        return np.fromiter((v for s in self.strings for v in s), dtype=np.int8)

    def check(self, part: BlockPartition) -> None:
        if self.lengths != part.cycle_lengths:
            raise ValueError(
                f"label lengths {self.lengths} do not match cycle lengths {part.cycle_lengths}"
            )

    def __str__(self) -> str:
        return "|".join(format_signs(s) for s in self.strings)


def _xor(u: SpinState, v: SpinState) -> np.ndarray:
    if u.n != v.n:
        raise ValueError(f"state lengths differ: {u.n} != {v.n}")
    return np.bitwise_xor(u.packed, v.packed)


def _mask_bytes(ignore, n: int) -> np.ndarray | None:
    if ignore is None:
        return None
    arr = np.asarray(ignore)
    if arr.dtype == bool:
        if arr.size != n:
            raise ValueError("ignore mask has the wrong length")
        keep = ~arr
    else:
        keep = np.ones(n, dtype=bool)
        keep[arr.astype(np.int64)] = False
    return np.packbits(keep, bitorder="little")


def hamming(u: SpinState, v: SpinState) -> int:
    return int(np.bitwise_count(_xor(u, v)).sum())


def block_max_distance(
    u: SpinState, v: SpinState, part: BlockPartition, ignore=None
) -> int:
    """Largest within-block Hamming distance between ``u`` and ``v``.

    ``ignore`` (boolean mask or index list) removes neurons from the count.
    """
    if part.n != u.n:
        raise ValueError(f"partition covers {part.n} neurons, states have {u.n}")
    diff = _xor(u, v)
    keep = _mask_bytes(ignore, u.n)
    if keep is not None:
        diff &= keep
    d = part.block_size
    if d % 8 == 0:
        per_block = np.bitwise_count(diff).reshape(-1, d // 8).sum(axis=1)
    else:
        bits = np.unpackbits(diff, count=u.n, bitorder="little")
        per_block = bits.reshape(-1, d).sum(axis=1, dtype=np.int64)
    return int(per_block.max())


def monochromatic_state(part: BlockPartition, labels: BlockLabels | str) -> SpinState:
    if not isinstance(labels, BlockLabels):
        labels = BlockLabels.parse(labels)
    labels.check(part)
    return SpinState._from_spins_unchecked(np.repeat(labels.flat(), part.block_size))


def block_sums(spins: np.ndarray, part: BlockPartition) -> np.ndarray:
    """Per-block sum of an unpacked +-1 vector."""
    return spins.reshape(-1, part.block_size).sum(axis=1, dtype=np.int64)
