"""Block-cyclic network construction and the binary network file format.

File layout (all integers little-endian)::

    magic      4s   b"BCAN"
    version    u16  1
    reserved   u16  0
    n          u64  neuron count
    d          u32  block size
    n_cycles   u32
    lengths    u32 * n_cycles
    nnz        u64  number of stored in-edges
    indptr     u64 * (n + 1)   CSR row pointers, row = target neuron
    indices    u32 * nnz       source neuron of each in-edge
    weights    u16 * nnz
    edge_adv   ceil(nnz / 8) bytes   bitmap: edge added adversarially
    flagged    ceil(n / 8) bytes     bitmap: neuron received adversarial edges
    anti       ceil(n / 8) bytes     bitmap: neuron uses anti-majority update
    meta_len   u32
    meta       utf-8 JSON (sorted keys), includes construction kind, params, seed

Bitmaps use the same little bit order as packed spin states.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import scipy.sparse as sp

from .state import BlockPartition

log = logging.getLogger(__name__)

MAGIC = b"BCAN"
FORMAT_VERSION = 1


class NetworkFormatError(ValueError):
    """Malformed network file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def make_rng(seed) -> tuple[np.random.Generator, Any]:
    """Return a generator and a JSON-friendly record of where it came from."""
    if isinstance(seed, np.random.Generator):
        return seed, None
    if isinstance(seed, (int, np.integer)):
        return np.random.default_rng(int(seed)), int(seed)
    if isinstance(seed, (list, tuple)):
        key = [int(v) for v in seed]
        return np.random.default_rng(key), key
    raise TypeError(f"cannot build a generator from {seed!r}")


@dataclass(frozen=True, eq=False)
class Network:
    """Integer-weighted directed network over a canonical block partition.

    In-edges are stored CSR style: the sources of neuron ``i`` are
    ``indices[indptr[i]:indptr[i+1]]`` with matching ``weights``.
    """

    partition: BlockPartition
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    edge_adversarial: np.ndarray
    flagged: np.ndarray
    anti_majority: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("indptr", "indices", "weights", "edge_adversarial", "flagged", "anti_majority"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.weights.astype(np.int32), self.indices, self.indptr), shape=(self.n, self.n)
        )

    @cached_property
    def targets(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))

    def in_edges(self, i: int) -> list[tuple[int, int]]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return list(zip(self.indices[lo:hi].tolist(), self.weights[lo:hi].tolist()))

    @cached_property
    def in_weight(self) -> np.ndarray:
        """Total incoming weight per neuron."""
        return np.bincount(self.targets, weights=self.weights, minlength=self.n).astype(np.int64)

    def validate(self) -> None:
        n = self.n
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0:
            raise ValueError("indptr must have n + 1 entries starting at 0")
        if np.any(np.diff(self.indptr) < 0) or self.indptr[-1] != self.indices.size:
            raise ValueError("indptr must be non-decreasing and end at nnz")
        if self.weights.shape != self.indices.shape or self.edge_adversarial.shape != self.indices.shape:
            raise ValueError("edge arrays disagree in length")
        if self.flagged.shape != (n,) or self.anti_majority.shape != (n,):
            raise ValueError("neuron flag arrays must have length n")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise ValueError("edge source out of range")
        if np.any(self.weights < 1):
            raise ValueError("weights must be positive integers")
        if np.any(self.indices == self.targets):
            raise ValueError("self-loops are not allowed")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.partition == other.partition
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("indptr", "indices", "weights", "edge_adversarial", "flagged", "anti_majority")
            )
            and _meta_json(self.meta) == _meta_json(other.meta)
        )

    __hash__ = None

    def replace(self, **changes) -> Network:
        kw = {
            k: getattr(self, k)
            for k in ("partition", "indptr", "indices", "weights", "edge_adversarial", "flagged", "anti_majority", "meta")
        }
        kw.update(changes)
        return Network(**kw)

    def __repr__(self) -> str:
        return (
            f"Network(kind={self.meta.get('kind')!r}, n={self.n}, d={self.partition.block_size}, "
            f"cycles={len(self.partition.cycle_lengths)}, nnz={self.nnz})"
        )


def _meta_json(meta: dict) -> str:
    return json.dumps(meta, sort_keys=True, separators=(",", ":"))


def _from_coo(part: BlockPartition, rows: np.ndarray, cols: np.ndarray, meta: dict) -> Network:
    n = part.n
    mat = sp.coo_matrix((np.ones(rows.size, dtype=np.int32), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    net = Network(
        partition=part,
        indptr=mat.indptr.astype(np.int64),
        indices=mat.indices.astype(np.int64),
        weights=mat.data.astype(np.int32),
        edge_adversarial=np.zeros(mat.nnz, dtype=bool),
        flagged=np.zeros(n, dtype=bool),
        anti_majority=np.zeros(n, dtype=bool),
        meta=meta,
    )
    net.validate()
    return net


def _check_lengths(lengths: Sequence[int]) -> tuple[int, ...]:
    lengths = tuple(int(v) for v in lengths)
    if not lengths:
        raise ValueError("need at least one block cycle")
    if min(lengths) < 2:
        # a one-block cycle would need edges inside its own block
        raise ValueError("block cycles of length 1 are not allowed")
    return lengths


@dataclass(frozen=True)
class LengthSample:
    values: tuple[int, ...]
    m: int
    b: int

    @property
    def z(self) -> int:
        return len(self.values)


def sample_lengths(m: int, b: int, rng) -> LengthSample:
    """``ceil(4 (m - b + 1))`` i.i.d. uniform draws from ``{b, ..., m}``."""
    if b < 1 or b > m:
        raise ValueError(f"need 1 <= b <= m, got b={b}, m={m}")
    gen, _ = make_rng(rng)
    z = math.ceil(4 * (m - b + 1))
    vals = gen.integers(b, m + 1, size=z)
    return LengthSample(tuple(int(v) for v in vals), m, b)


def _resample_ones(sample: LengthSample, gen: np.random.Generator) -> tuple[int, ...]:
    vals = np.array(sample.values, dtype=np.int64)
    ones = vals == 1
    if ones.any():
        if sample.m < 2:
            raise ValueError("m = 1 only yields length-1 cycles, which are not allowed")
        log.info("resampling %d sampled cycle length(s) equal to 1", int(ones.sum()))
        while ones.any():
            vals[ones] = gen.integers(sample.b, sample.m + 1, size=int(ones.sum()))
            ones = vals == 1
    return tuple(int(v) for v in vals)


def dense_network(lengths: Sequence[int], d: int, meta: dict | None = None) -> Network:
    """Disjoint union of dense block cycles (complete bipartite links, weight 1)."""
    lengths = _check_lengths(lengths)
    if d < 1:
        raise ValueError("block size must be >= 1")
    part = BlockPartition(d, lengths)
    n = part.n
    src_block = part.predecessor[np.arange(n) // d]
    indices = (src_block[:, None] * d + np.arange(d)[None, :]).ravel()
    net = Network(
        partition=part,
        indptr=np.arange(n + 1, dtype=np.int64) * d,
        indices=indices.astype(np.int64),
        weights=np.ones(n * d, dtype=np.int32),
        edge_adversarial=np.zeros(n * d, dtype=bool),
        flagged=np.zeros(n, dtype=bool),
        anti_majority=np.zeros(n, dtype=bool),
        meta=meta if meta is not None else {"kind": "dense", "params": {"d": d, "lengths": list(lengths)}, "seed": None},
    )
    net.validate()
    return net


def dense_block_cycle(length: int, d: int) -> Network:
    return dense_network([length], d)


def build_dense_bca(m: int, d: int, rng) -> Network:
    """Dense block-cyclic architecture with ``4m`` sampled cycle lengths."""
    if m < 1 or d < 1:
        raise ValueError("m and d must be >= 1")
    gen, seed = make_rng(rng)
    lengths = _resample_ones(sample_lengths(m, 1, gen), gen)
    meta = {"kind": "dense", "params": {"m": m, "b": 1, "d": d, "lengths": list(lengths)}, "seed": seed}
    return dense_network(lengths, d, meta)


def _check_sparse(d: int, h: int) -> None:
    if h % 2 == 0:
        raise ValueError(f"h must be odd, got {h}")
    if not 3 <= h < d:
        raise ValueError(f"need 3 <= h < d, got h={h}, d={d}")


def sparse_network(lengths: Sequence[int], d: int, h: int, rng, meta: dict | None = None) -> Network:
    """Block cycles where every neuron draws ``h`` predecessors with replacement.

    Repeated draws merge into one edge whose weight is the multiplicity.
    """
    lengths = _check_lengths(lengths)
    _check_sparse(d, h)
    gen, seed = make_rng(rng)
    part = BlockPartition(d, lengths)
    n = part.n
    src_block = part.predecessor[np.arange(n) // d]
    cols = src_block[:, None] * d + gen.integers(0, d, size=(n, h))
    rows = np.repeat(np.arange(n, dtype=np.int64), h)
    if meta is None:
        meta = {"kind": "sparse", "params": {"d": d, "h": h, "lengths": list(lengths)}, "seed": seed}
    return _from_coo(part, rows, cols.ravel(), meta)


def sparse_connect(length: int, d: int, h: int, rng) -> Network:
    return sparse_network([length], d, h, rng)


def build_sparse_bca(m: int, b: int, d: int, h: int, rng) -> Network:
    if b >= m:
        raise ValueError(f"need b < m, got b={b}, m={m}")
    _check_sparse(d, h)
    gen, seed = make_rng(rng)
    lengths = _resample_ones(sample_lengths(m, b, gen), gen)
    meta = {
        "kind": "sparse",
        "params": {"m": m, "b": b, "d": d, "h": h, "lengths": list(lengths)},
        "seed": seed,
    }
    return sparse_network(lengths, d, h, gen, meta)


def _append_edges(net: Network, targets: np.ndarray, sources: np.ndarray, adversarial: bool) -> Network:
    rows = np.concatenate([net.targets, targets])
    cols = np.concatenate([net.indices, sources])
    wts = np.concatenate([net.weights, np.ones(targets.size, dtype=np.int32)])
    adv = np.concatenate([net.edge_adversarial, np.full(targets.size, adversarial)])
    order = np.argsort(rows, kind="stable")
    indptr = np.zeros(net.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=net.n), out=indptr[1:])
    return net.replace(
        indptr=indptr,
        indices=cols[order],
        weights=wts[order],
        edge_adversarial=adv[order],
    )


def add_adversarial_edges(
    net: Network,
    q: int,
    rng,
    edges: Sequence[tuple[int, int]] | None = None,
    per_neuron: int = 1,
) -> Network:
    """Give at most ``q`` neurons per block extra weight-1 in-edges.

    With ``edges`` (pairs ``(target, source)``) the adversary is explicit;
    otherwise ``q`` targets per block are drawn uniformly and each receives
    ``per_neuron`` edges from uniformly random neurons anywhere in the network.
    """
    d = net.partition.block_size
    if q < 0 or q > d:
        raise ValueError(f"need 0 <= q <= d, got q={q}, d={d}")
    seed = None
    if edges is not None:
        pairs = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        targets, sources = pairs[:, 0], pairs[:, 1]
        if targets.size and (min(targets.min(), sources.min()) < 0 or max(targets.max(), sources.max()) >= net.n):
            raise ValueError("edge endpoint out of range")
        if np.any(targets == sources):
            raise ValueError("self-loops are not allowed")
        per_block = np.bincount(np.unique(targets) // d, minlength=net.partition.total_blocks)
        if per_block.size and per_block.max() > q:
            raise ValueError(f"explicit edges touch more than q={q} neurons in some block")
    else:
        if q == 0:
            return net
        gen, seed = make_rng(rng)
        nb = net.partition.total_blocks
        picks = np.argsort(gen.random((nb, d)), axis=1)[:, :q]
        chosen = (np.arange(nb)[:, None] * d + picks).ravel()
        targets = np.repeat(chosen, per_neuron)
        sources = gen.integers(0, net.n, size=targets.size)
        clash = sources == targets
        while clash.any():
            sources[clash] = gen.integers(0, net.n, size=int(clash.sum()))
            clash = sources == targets
    if targets.size == 0:
        return net
    flagged = net.flagged.copy()
    flagged[targets] = True
    meta = dict(net.meta)
    meta["adversarial"] = list(meta.get("adversarial", [])) + [
        {"q": q, "per_neuron": per_neuron if edges is None else None, "explicit": edges is not None, "seed": seed}
    ]
    out = _append_edges(net, targets, sources, adversarial=True).replace(flagged=flagged, meta=meta)
    out.validate()
    return out


def mark_anti_majority(net: Network, count: int, rng, neurons: Sequence[int] | None = None) -> Network:
    """Switch ``count`` uniformly chosen neurons (or the given ones) to anti-majority updates."""
    if neurons is None:
        if count < 0 or count > net.n:
            raise ValueError(f"need 0 <= count <= n, got {count}")
        if count == 0:
            return net
        gen, seed = make_rng(rng)
        chosen = gen.choice(net.n, size=count, replace=False)
    else:
        chosen = np.asarray(neurons, dtype=np.int64)
        seed = None
        if chosen.size and (chosen.min() < 0 or chosen.max() >= net.n):
            raise ValueError("neuron index out of range")
    anti = net.anti_majority.copy()
    anti[chosen] = True
    meta = dict(net.meta)
    meta["anti_majority"] = list(meta.get("anti_majority", [])) + [{"count": int(chosen.size), "seed": seed}]
    return net.replace(anti_majority=anti, meta=meta)


def _bits(mask: np.ndarray) -> bytes:
    return np.packbits(mask.astype(bool), bitorder="little").tobytes()


def serialize(net: Network) -> bytes:
    part = net.partition
    if net.n >= 2**32:
        raise ValueError("networks with 2^32 or more neurons cannot be serialized")
    meta = _meta_json(net.meta).encode()
    chunks = [
        MAGIC,
        struct.pack("<HHQII", FORMAT_VERSION, 0, net.n, part.block_size, len(part.cycle_lengths)),
        np.asarray(part.cycle_lengths, dtype="<u4").tobytes(),
        struct.pack("<Q", net.nnz),
        net.indptr.astype("<u8").tobytes(),
        net.indices.astype("<u4").tobytes(),
        net.weights.astype("<u2").tobytes(),
        _bits(net.edge_adversarial),
        _bits(net.flagged),
        _bits(net.anti_majority),
        struct.pack("<I", len(meta)),
        meta,
    ]
    return b"".join(chunks)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.buf):
            raise NetworkFormatError(
                f"truncated input while reading {what}: need {size} bytes, {len(self.buf) - self.pos} left",
                self.pos,
            )
        out = self.buf[self.pos : self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count, what), dtype=dt)

    def bitmap(self, count: int, what: str) -> np.ndarray:
        raw = np.frombuffer(self.take((count + 7) // 8, what), dtype=np.uint8)
        return np.unpackbits(raw, count=count, bitorder="little").astype(bool)


def deserialize(data: bytes) -> Network:
    r = _Reader(bytes(data))
    if r.take(4, "magic") != MAGIC:
        raise NetworkFormatError("bad magic, not a network file", 0)
    version, _, n, d, n_cycles = r.unpack("<HHQII", "header")
    if version != FORMAT_VERSION:
        raise NetworkFormatError(f"unsupported format version {version}", 4)
    at = r.pos
    lengths = r.array("<u4", n_cycles, "cycle lengths")
    try:
        part = BlockPartition(int(d), tuple(int(v) for v in lengths))
    except ValueError as exc:
        raise NetworkFormatError(f"invalid partition: {exc}", at) from None
    if part.n != n:
        raise NetworkFormatError(f"n={n} but d * sum(lengths) = {part.n}", at)
    (nnz,) = r.unpack("<Q", "edge count")
    indptr = r.array("<u8", n + 1, "indptr").astype(np.int64)
    indices = r.array("<u4", nnz, "indices").astype(np.int64)
    weights = r.array("<u2", nnz, "weights").astype(np.int32)
    edge_adv = r.bitmap(nnz, "edge flags")
    flagged = r.bitmap(n, "neuron flags")
    anti = r.bitmap(n, "anti-majority flags")
    (meta_len,) = r.unpack("<I", "metadata length")
    at = r.pos
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise NetworkFormatError(f"metadata is not valid JSON: {exc}", at) from None
    if r.pos != len(r.buf):
        raise NetworkFormatError(f"{len(r.buf) - r.pos} trailing bytes", r.pos)
    net = Network(part, indptr, indices, weights, edge_adv, flagged, anti, meta)
    try:
        net.validate()
    except ValueError as exc:
        raise NetworkFormatError(f"inconsistent network: {exc}", 0) from None
    return net


def save(net: Network, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(net))


def load(path) -> Network:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
