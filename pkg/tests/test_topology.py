import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockcycle.topology import (
    NetworkFormatError,
    add_adversarial_edges,
    build_dense_bca,
    build_sparse_bca,
    dense_block_cycle,
    dense_network,
    deserialize,
    load,
    mark_anti_majority,
    sample_lengths,
    save,
    serialize,
    sparse_connect,
    sparse_network,
)


def sources_in_predecessor(net):
    part = net.partition
    d = part.block_size
    normal = ~net.edge_adversarial
    tgt_block = net.targets[normal] // d
    return np.all(net.indices[normal] // d == part.predecessor[tgt_block])


def test_sample_lengths_examples():
    s = sample_lengths(10, 1, 0)
    assert s.z == 40 and all(1 <= v <= 10 for v in s.values)
    t = sample_lengths(5, 5, 0)
    assert t.values == (5, 5, 5, 5)
    assert sample_lengths(10, 3, 1).z == 32
    with pytest.raises(ValueError):
        sample_lengths(3, 4, 0)


def test_dense_block_cycle_small():
    net = dense_block_cycle(3, 2)
    assert net.n == 6
    assert np.all(np.diff(net.indptr) == 2)
    assert np.all(net.weights == 1)
    assert net.in_edges(0) == [(4, 1), (5, 1)]
    assert sources_in_predecessor(net)


def test_dense_block_cycle_total_weight():
    net = dense_block_cycle(200, 100)
    assert net.n == 20000
    assert int(net.weights.sum()) == 200 * 100 * 100


def test_dense_rejects_length_one():
    with pytest.raises(ValueError):
        dense_network([1, 3], 2)


def test_build_dense_bca_is_seeded():
    a = build_dense_bca(3, 1, 42)
    b = build_dense_bca(3, 1, 42)
    assert a == b and serialize(a) == serialize(b)
    assert len(a.partition.cycle_lengths) == 12
    assert min(a.partition.cycle_lengths) >= 2
    assert a.meta["seed"] == 42


def test_build_dense_bca_bookkeeping():
    net = build_dense_bca(10, 2, 7)
    assert net.partition.total_blocks == sum(net.meta["params"]["lengths"])
    assert net.n == 2 * net.partition.total_blocks
    assert np.all(net.in_weight == 2)


def test_block_count_grows_like_m_squared():
    for m in (50, 100, 200):
        ratios = [build_dense_bca(m, 1, seed).partition.total_blocks / m**2 for seed in range(100)]
        assert 0.5 <= min(ratios) and max(ratios) <= 4.5


def test_sparse_small_in_weights():
    for seed in range(20):
        net = sparse_connect(2, 4, 3, seed)
        assert np.all(net.in_weight == 3)
        distinct = np.diff(net.indptr)
        assert distinct.min() >= 1 and distinct.max() <= 3
        assert sources_in_predecessor(net)


def test_sparse_sources_stay_in_predecessor_block():
    net = sparse_connect(200, 10, 3, 1)
    assert sources_in_predecessor(net)
    assert np.all(net.in_weight == 3)


def test_sparse_distinct_source_fraction():
    d = 1000
    net = sparse_connect(30, d, 3, 9)
    frac = float(np.mean(np.diff(net.indptr) == 3))
    q = 999 * 998 / 1000**2
    assert abs(frac - q) <= 3 * math.sqrt(q * (1 - q) / net.n)


@pytest.mark.parametrize("d,h", [(5, 4), (5, 1), (3, 3), (3, 5)])
def test_sparse_rejects_bad_h(d, h):
    with pytest.raises(ValueError):
        sparse_network([3], d, h, 0)


def test_build_sparse_bca():
    net = build_sparse_bca(12, 4, 5, 3, 3)
    lengths = net.partition.cycle_lengths
    assert len(lengths) == math.ceil(4 * (12 - 4 + 1))
    assert all(4 <= v <= 12 for v in lengths)
    assert np.all(net.in_weight == 3)
    assert build_sparse_bca(12, 4, 5, 3, 3) == net
    with pytest.raises(ValueError):
        build_sparse_bca(5, 5, 5, 3, 0)


def test_adversarial_edges_budget():
    net = sparse_connect(6, 8, 3, 0)
    assert add_adversarial_edges(net, 0, 1) is net
    full = add_adversarial_edges(net, 8, 1)
    assert full.flagged.all()
    some = add_adversarial_edges(net, 2, 1)
    per_block = some.flagged.reshape(-1, 8).sum(axis=1)
    assert np.all(per_block == 2)
    # original edges are untouched, each flagged neuron gains exactly one weight
    assert np.array_equal(some.in_weight - net.in_weight, some.flagged.astype(int))
    assert int(some.edge_adversarial.sum()) == 12
    assert np.all(some.indices[some.edge_adversarial] != some.targets[some.edge_adversarial])
    with pytest.raises(ValueError):
        add_adversarial_edges(net, 9, 1)


def test_adversarial_explicit_edges():
    net = dense_network([3], 3)
    out = add_adversarial_edges(net, 1, None, edges=[(0, 8), (4, 0)])
    assert out.flagged.nonzero()[0].tolist() == [0, 4]
    assert (8, 1) in out.in_edges(0)
    with pytest.raises(ValueError):
        add_adversarial_edges(net, 1, None, edges=[(0, 8), (1, 8)])
    with pytest.raises(ValueError):
        add_adversarial_edges(net, 1, None, edges=[(2, 2)])


def test_anti_majority_marking():
    net = dense_network([3], 2)
    assert not mark_anti_majority(net, 0, 1).anti_majority.any()
    assert mark_anti_majority(net, net.n, 1).anti_majority.all()
    assert mark_anti_majority(net, 2, 1).anti_majority.sum() == 2
    with pytest.raises(ValueError):
        mark_anti_majority(net, net.n + 1, 1)


def test_serialization_round_trip(tmp_path):
    net = sparse_network([4, 5], 7, 3, 11)
    net = add_adversarial_edges(net, 2, 12)
    net = mark_anti_majority(net, 3, 13)
    data = serialize(net)
    back = deserialize(data)
    assert back == net
    assert back.meta == net.meta
    assert serialize(back) == data
    save(net, tmp_path / "n.bcan")
    assert load(tmp_path / "n.bcan") == net
    assert serialize(sparse_network([4, 5], 7, 3, 11)) == serialize(sparse_network([4, 5], 7, 3, 11))


def test_deserialize_errors():
    data = serialize(dense_network([3], 2))
    with pytest.raises(NetworkFormatError) as err:
        deserialize(data[:-5])
    assert err.value.offset > 0
    with pytest.raises(NetworkFormatError) as err:
        deserialize(b"XXXX" + data[4:])
    assert err.value.offset == 0
    with pytest.raises(NetworkFormatError):
        deserialize(data + b"\0")
    with pytest.raises(NetworkFormatError):
        deserialize(b"")


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.integers(2, 6), min_size=1, max_size=3),
    st.sampled_from([5, 7, 9]),
    st.integers(0, 2**31),
)
def test_sparse_invariants(lengths, d, seed):
    net = sparse_network(lengths, d, 3, seed)
    assert net.n == d * sum(lengths)
    assert np.all(net.in_weight == 3)
    assert sources_in_predecessor(net)
    assert deserialize(serialize(net)) == net
