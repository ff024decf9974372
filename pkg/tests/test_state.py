import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockcycle.state import (
    BlockLabels,
    BlockPartition,
    SpinState,
    block_max_distance,
    block_partition,
    block_sums,
    hamming,
    monochromatic_state,
    parse_signs,
)


def spin_lists(min_size=0, max_size=80):
    return st.lists(st.sampled_from([-1, 1]), min_size=min_size, max_size=max_size)


@st.composite
def state_pairs(draw, max_n=80):
    n = draw(st.integers(0, max_n))
    u = draw(spin_lists(n, n))
    v = draw(spin_lists(n, n))
    return SpinState.from_spins(u), SpinState.from_spins(v)


@st.composite
def partitioned_triples(draw):
    d = draw(st.integers(1, 12))
    lengths = draw(st.lists(st.integers(1, 5), min_size=1, max_size=3))
    part = BlockPartition(d, tuple(lengths))
    states = [SpinState.from_spins(draw(spin_lists(part.n, part.n))) for _ in range(3)]
    return part, *states


def test_partition_layout():
    part = block_partition([3], 2)
    assert part.total_blocks == 3
    assert [list(part.block_range(b)) for b in range(3)] == [[0, 1], [2, 3], [4, 5]]
    assert part.cycles == [range(0, 3)]

    single = block_partition([1], 1)
    assert single.n == 1 and single.cycles == [range(0, 1)]
    assert list(single.predecessor) == [0]

    two = block_partition([3, 4], 2)
    assert two.total_blocks == 7 and two.n == 14
    assert [len(c) for c in two.cycles] == [3, 4]
    assert list(two.predecessor) == [2, 0, 1, 6, 3, 4, 5]
    assert list(two.block_of(np.array([0, 5, 13]))) == [0, 2, 6]


@pytest.mark.parametrize("bad", [dict(block_size=0, cycle_lengths=(3,)), dict(block_size=2, cycle_lengths=())])
def test_partition_rejects(bad):
    with pytest.raises(ValueError):
        BlockPartition(**bad)


def test_hamming_examples():
    u = SpinState.from_spins("++--")
    assert hamming(u, u) == 0
    x = SpinState.from_spins("+-+-+")
    assert hamming(x, -x) == 5
    assert hamming(u, SpinState.from_spins("+--+")) == 2
    with pytest.raises(ValueError):
        hamming(u, x)


def test_block_max_examples():
    part = BlockPartition(2, (2,))
    u = SpinState.from_spins("++--")
    assert block_max_distance(u, u, part) == 0
    assert block_max_distance(u, SpinState.from_spins("+---"), part) == 1
    part3 = BlockPartition(3, (2,))
    assert block_max_distance(SpinState.constant(6, 1), SpinState.constant(6, -1), part3) == 3


def test_block_max_ignore():
    part = BlockPartition(4, (2,))
    u = SpinState.constant(8)
    v = SpinState.from_spins("--++-+++")
    assert block_max_distance(u, v, part) == 2
    assert block_max_distance(u, v, part, ignore=[0]) == 1
    mask = np.zeros(8, dtype=bool)
    mask[[0, 1]] = True
    assert block_max_distance(u, v, part, ignore=mask) == 1


def test_block_max_byte_aligned_path_matches_unpacked():
    rng = np.random.default_rng(3)
    part = BlockPartition(16, (3, 2))
    for _ in range(20):
        a, b = (rng.choice([-1, 1], part.n) for _ in range(2))
        ref = int((a != b).reshape(-1, 16).sum(axis=1).max())
        assert block_max_distance(SpinState.from_spins(a), SpinState.from_spins(b), part) == ref


def test_monochromatic_examples():
    assert monochromatic_state(BlockPartition(2, (2,)), "+-") == SpinState.from_spins("++--")
    assert monochromatic_state(BlockPartition(1, (4,)), "+--+") == SpinState.from_spins("+--+")
    assert monochromatic_state(BlockPartition(3, (3,)), "+--") == SpinState.from_spins("+++------")
    two = monochromatic_state(BlockPartition(1, (2, 3)), "+-|--+")
    assert two == SpinState.from_spins("+---+")
    with pytest.raises(ValueError):
        monochromatic_state(BlockPartition(1, (2,)), "+--")


def test_labels_parse_forms():
    a = BlockLabels.parse("+--|-+")
    assert a == BlockLabels.parse(["+--", "-+"]) == BlockLabels(((1, -1, -1), (-1, 1)))
    assert a.lengths == (3, 2)
    assert str(a) == "+--|-+"
    assert list(a.flat()) == [1, -1, -1, -1, 1]
    with pytest.raises(ValueError):
        parse_signs("+x")


def test_hex_and_packing():
    x = SpinState.from_spins("+--+-+++-")
    assert x.packed.tolist() == [0b11101001, 0]
    assert SpinState.from_hex(x.to_hex()) == x
    assert x.to_hex() == "9:e900"
    with pytest.raises(ValueError):
        SpinState(bytes([0, 0b10]), 9)  # padding bit set
    with pytest.raises(ValueError):
        SpinState.from_spins([1, 0, -1])


def test_block_sums():
    part = BlockPartition(3, (2,))
    assert block_sums(np.array([1, 1, -1, -1, -1, -1]), part).tolist() == [1, -3]


@given(spin_lists())
def test_spins_round_trip(spins):
    x = SpinState.from_spins(spins)
    assert x.spins().tolist() == spins
    assert SpinState.from_hex(x.to_hex()) == x
    assert hash(SpinState(x.packed, x.n)) == hash(x)
    assert -(-x) == x


@given(state_pairs())
def test_hamming_is_a_metric_pair(pair):
    u, v = pair
    assert hamming(u, v) == hamming(v, u)
    assert hamming(u, v) == int(np.count_nonzero(u.spins() != v.spins()))
    assert (hamming(u, v) == 0) == (u == v)
    assert hamming(u, -u) == u.n


@settings(max_examples=150)
@given(partitioned_triples())
def test_block_max_is_a_metric(triple):
    part, u, v, w = triple
    duv = block_max_distance(u, v, part)
    assert duv == block_max_distance(v, u, part)
    assert (duv == 0) == (u == v)
    assert duv <= block_max_distance(u, w, part) + block_max_distance(w, v, part)
    assert duv <= min(part.block_size, hamming(u, v))
    assert hamming(u, v) <= part.total_blocks * duv
