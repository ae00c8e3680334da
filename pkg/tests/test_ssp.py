import numpy as np
import pytest

from oracles import transpose_chunks
from osp.gridseq import GridShape, SequenceTensor, random_tensor
from osp.skiparse import SparsePattern, gsa_to_tsa, pattern_map, tsa_to_gsa
from osp.ssp import (CollectiveError, CommLog, ProcessGroup, RankShard, ShardingError,
                     all_to_all, comm_comparison, gather_shards, naive_switch_comm,
                     shard_pattern_layout, ssp_pattern_switch, ulysses_block_comm)


def _tsa_layout(g, chan=4, seed=0, batch=1):
    x = random_tensor(batch, g.seq_len, chan, seed)
    return pattern_map(g, SparsePattern.TOKEN_WISE, batch).apply(x)


def test_single_rank_shard_is_whole_input():
    g = GridShape(1, 4, 4, 2)
    x_tsa = _tsa_layout(g)
    group = shard_pattern_layout(x_tsa, 1)
    assert group.size == 1
    assert np.array_equal(group.shards[0].tensor.data, x_tsa.data)


@pytest.mark.parametrize("group_size,per_rank", [(4, 1), (2, 2)])
def test_shard_counts(group_size, per_rank):
    g = GridShape(1, 4, 4, 2)
    x_tsa = _tsa_layout(g)
    group = shard_pattern_layout(x_tsa, group_size)
    assert all(s.tensor.batch == per_rank for s in group.shards)
    assert np.array_equal(gather_shards(group).data, x_tsa.data)


def test_shard_divisibility_error():
    g = GridShape(1, 4, 4, 2)
    with pytest.raises(ShardingError):
        shard_pattern_layout(_tsa_layout(g), 3)


def test_all_to_all_single_rank_identity():
    log = CommLog()
    buf = np.arange(6.0).reshape(3, 2)
    out = all_to_all([buf], log)
    assert np.array_equal(out[0], buf)
    assert log.count("all_to_all") == 1


def test_all_to_all_two_rank_transpose():
    # send[0] = [A, B], send[1] = [C, D]  ->  recv[0] = [A, C], recv[1] = [B, D]
    a, b, c, d = (np.full((1, 2), v) for v in (1.0, 2.0, 3.0, 4.0))
    log = CommLog()
    out = all_to_all([np.concatenate([a, b]), np.concatenate([c, d])], log)
    assert np.array_equal(out[0], np.concatenate([a, c]))
    assert np.array_equal(out[1], np.concatenate([b, d]))
    assert log.events[0].payload_per_rank == 4


def test_all_to_all_matches_transpose_oracle():
    rng = np.random.Generator(np.random.PCG64(3))
    send = [rng.standard_normal((8, 3)) for _ in range(4)]
    out = all_to_all(send, CommLog())
    expected = transpose_chunks(send, 4)
    for got, want in zip(out, expected):
        assert np.array_equal(got, want)


def test_all_to_all_unequal_chunk_error():
    with pytest.raises(CollectiveError):
        all_to_all([np.zeros((3, 1)), np.zeros((3, 1))], CommLog())


def test_unequal_shard_shapes_rejected():
    t1 = SequenceTensor(np.zeros((1, 4, 2)))
    t2 = SequenceTensor(np.zeros((2, 4, 2)))
    with pytest.raises(ShardingError):
        ProcessGroup((RankShard(0, t1), RankShard(1, t2)), CommLog())


SWITCH_CASES = [
    (GridShape(1, 4, 4, 2), 4),
    (GridShape(1, 8, 8, 2), 2),
    (GridShape(1, 8, 8, 2), 4),
]


@pytest.mark.parametrize("g,group_size", SWITCH_CASES, ids=str)
def test_switch_tsa_to_gsa_matches_gather_convert_reshard(g, group_size):
    x_tsa = _tsa_layout(g, seed=1)
    group = shard_pattern_layout(x_tsa, group_size)
    switched = ssp_pattern_switch(group, g)
    oracle = tsa_to_gsa(g).apply(x_tsa)
    per = x_tsa.batch // group_size
    for r in range(group_size):
        assert np.array_equal(switched.shards[r].tensor.data,
                              oracle.data[r * per:(r + 1) * per])


@pytest.mark.parametrize("g,group_size", SWITCH_CASES, ids=str)
def test_switch_gsa_to_tsa_matches_gather_convert_reshard(g, group_size):
    x_gsa = pattern_map(g, SparsePattern.GROUP_WISE).apply(random_tensor(1, g.seq_len, 4, 2))
    group = shard_pattern_layout(x_gsa, group_size)
    switched = ssp_pattern_switch(group, g)
    oracle = gsa_to_tsa(g).apply(x_gsa)
    per = x_gsa.batch // group_size
    for r in range(group_size):
        assert np.array_equal(switched.shards[r].tensor.data,
                              oracle.data[r * per:(r + 1) * per])


def test_switch_logs_exactly_one_all_to_all_and_no_gathers():
    g = GridShape(1, 8, 8, 2)
    group = shard_pattern_layout(_tsa_layout(g, seed=3), 4)
    switched = ssp_pattern_switch(group, g)
    assert group.log.count("all_to_all") == 1
    assert group.log.count("all_gather") == 0
    ssp_pattern_switch(switched, g)
    assert group.log.count("all_to_all") == 2


def test_single_rank_switch_equals_local_conversion_and_still_logs():
    g = GridShape(1, 8, 8, 2)
    x_tsa = _tsa_layout(g, seed=4)
    group = shard_pattern_layout(x_tsa, 1)
    switched = ssp_pattern_switch(group, g)
    assert np.array_equal(switched.shards[0].tensor.data, tsa_to_gsa(g).apply(x_tsa).data)
    assert group.log.count("all_to_all") == 1


def test_switch_with_multi_item_batch():
    g = GridShape(1, 8, 8, 2)
    x_tsa = _tsa_layout(g, seed=5, batch=3)
    group = shard_pattern_layout(x_tsa, 2)
    switched = ssp_pattern_switch(group, g)
    oracle = tsa_to_gsa(g, batch=3).apply(x_tsa)
    per = x_tsa.batch // 2
    for r in range(2):
        assert np.array_equal(switched.shards[r].tensor.data,
                              oracle.data[r * per:(r + 1) * per])


def test_group_size_must_divide_k_squared():
    g = GridShape(1, 4, 4, 2)
    x_tsa = _tsa_layout(g, batch=3)
    group = shard_pattern_layout(x_tsa, 3)  # divides batch 12, not k^2 = 4
    with pytest.raises(ShardingError):
        ssp_pattern_switch(group, g)


def test_load_balance_preserved():
    g = GridShape(1, 8, 8, 2)
    group = shard_pattern_layout(_tsa_layout(g, seed=6), 4)
    switched = ssp_pattern_switch(group, g)
    sizes = {s.tensor.data.size for s in switched.shards}
    assert len(sizes) == 1


def test_switch_is_deterministic():
    g = GridShape(1, 8, 8, 2)
    runs = []
    for _ in range(2):
        group = shard_pattern_layout(_tsa_layout(g, seed=7), 4)
        switched = ssp_pattern_switch(group, g)
        runs.append(gather_shards(switched).data)
    assert np.array_equal(runs[0], runs[1])


def test_head_split_composability():
    # switching each channel group separately and merging equals switching whole
    g = GridShape(1, 8, 8, 2)
    x_tsa = _tsa_layout(g, chan=8, seed=8)
    whole = ssp_pattern_switch(shard_pattern_layout(x_tsa, 4), g)
    parts = []
    for h in range(2):
        sub = SequenceTensor(x_tsa.data[:, :, h * 4:(h + 1) * 4])
        parts.append(ssp_pattern_switch(shard_pattern_layout(sub, 4), g))
    for r in range(4):
        merged = np.concatenate([p.shards[r].tensor.data for p in parts], axis=2)
        assert np.array_equal(merged, whole.shards[r].tensor.data)


def test_ulysses_block_comm_examples():
    log = ulysses_block_comm(8, 1000)
    assert log.count("all_to_all") == 4
    assert log.total_payload() == 4000
    assert ulysses_block_comm(2, 0).total_payload() == 0
    assert ulysses_block_comm(8, 4096).total_payload() == 16384


def test_naive_switch_comm_examples():
    _, rep = naive_switch_comm(1, 100)
    assert rep["global_traffic"] == 0
    _, rep = naive_switch_comm(4, 100)
    assert rep["global_traffic"] == 1200
    assert rep["recv_per_rank"] == 300
    _, rep = naive_switch_comm(8, 100)
    assert rep["global_traffic"] == 5600


def test_comm_comparison_counts_and_ratio():
    rep = comm_comparison(4, 1000, blocks=3)
    assert rep["ssp_events"] == 3
    assert rep["ulysses_events"] == 12
    assert rep["volume_ratio"] == 0.25
    assert rep["volume_reduction_percent"] == 75.0
    assert rep["ssp_global_per_switch"] == 3000
    assert rep["naive_global_per_switch"] == 12000


def test_naive_over_ssp_grows_linearly():
    rows = comm_comparison(4, 100)["growth_table"]
    assert [r["group_size"] for r in rows] == [2, 4, 8]
    for r in rows:
        assert r["naive_global"] == r["group_size"] * r["ssp_global"]


def test_switch_payload_matches_local_elements():
    g = GridShape(1, 8, 8, 2)
    group = shard_pattern_layout(_tsa_layout(g, chan=4, seed=9), 4)
    ssp_pattern_switch(group, g)
    assert group.log.events[0].payload_per_rank == group.local_elements
