"""Tests du flux d'épisodes (support, query, domain query)."""

from collections import namedtuple

import numpy as np
import pytest

from models.run_config import EpisodeConfig
from utils.episodes import (
    build_episode_stream,
    dump_episodes,
    episode_count,
    iter_task_batches,
    sample_task_batch,
)
from utils.errors import EpisodeError
from utils.jsonUtils import JsonUtils


Item = namedtuple("Item", "id")


def items(n, prefix="d"):
    return [Item(f"{prefix}{i}") for i in range(n)]


def test_episode_count_floors():
    config = EpisodeConfig(k_shot=32, l_shot=32)
    stream = build_episode_stream(items(320), None, config)
    assert len(stream) == 5 == episode_count(320, config)


def test_too_few_samples_for_one_episode():
    with pytest.raises(EpisodeError, match="insufficient samples"):
        build_episode_stream(items(63), None, EpisodeConfig(k_shot=32, l_shot=32))


def test_episodes_partition_a_prefix_of_the_permutation():
    config = EpisodeConfig(k_shot=5, l_shot=3, seed=2)
    stream = build_episode_stream(items(50), None, config)
    used = [item.id for episode in stream for item in episode.support + episode.query]
    assert len(stream) == 6
    assert len(used) == len(set(used)) == 48
    for episode in stream:
        assert len(episode.support) == 5 and len(episode.query) == 3
        assert episode.domain_query is None


def test_domain_query_is_disjoint_from_support_and_query():
    D = items(40)
    pool = D[20:] + items(10, prefix="x")
    config = EpisodeConfig(k_shot=4, l_shot=4, seed=7)
    for episode in build_episode_stream(D, pool, config):
        inside = {item.id for item in episode.support + episode.query}
        drawn = [item.id for item in episode.domain_query]
        assert len(drawn) == 4 == len(set(drawn))
        assert not inside & set(drawn)
        assert set(drawn) <= {item.id for item in pool}


def test_domain_pool_too_small():
    D = items(16)
    with pytest.raises(EpisodeError, match="domain pool"):
        build_episode_stream(D, D[:4], EpisodeConfig(k_shot=4, l_shot=4))


def test_pooled_domain_query_draws_outside_the_episode():
    D = items(128)
    stream = build_episode_stream(D, D, EpisodeConfig(k_shot=32, l_shot=32))
    assert all(len(episode.domain_query) == 32 for episode in stream)


def test_random_sizes():
    rng = np.random.default_rng(0)
    for _ in range(100):
        k, l = int(rng.integers(1, 20)), int(rng.integers(1, 20))
        n = int(rng.integers(k + l, 300))
        config = EpisodeConfig(k_shot=k, l_shot=l, seed=int(rng.integers(1000)))
        stream = build_episode_stream(items(n), None, config)
        assert len(stream) == n // (k + l)
        used = [item.id for episode in stream for item in episode.support + episode.query]
        assert len(used) == len(set(used)) == len(stream) * (k + l)


def test_same_seed_same_stream():
    D, pool = items(64), items(30, prefix="x")
    config = EpisodeConfig(k_shot=4, l_shot=4, seed=5)
    first = [episode.to_record() for episode in build_episode_stream(D, pool, config)]
    second = [episode.to_record() for episode in build_episode_stream(D, pool, config)]
    other = [episode.to_record() for episode in build_episode_stream(D, pool, config, seed=[5, 1])]
    assert first == second
    assert first != other


def test_task_batches_cover_the_stream():
    stream = build_episode_stream(items(40), None, EpisodeConfig(k_shot=4, l_shot=4))
    sizes = [len(batch) for batch in iter_task_batches(stream, 2)]
    assert sizes == [2, 2, 1]
    assert [episode.index for episode in sample_task_batch(stream, 2, offset=2)] == [2, 3]


def test_task_batch_size_must_be_positive():
    stream = build_episode_stream(items(8), None, EpisodeConfig(k_shot=4, l_shot=4))
    with pytest.raises(ValueError):
        sample_task_batch(stream, 0)
    with pytest.raises(ValueError):
        list(iter_task_batches(stream, 0))


def test_empty_stream_rejected():
    with pytest.raises(EpisodeError):
        sample_task_batch([], 2)


def test_dump_episodes(tmp_path):
    stream = build_episode_stream(items(16), items(8, prefix="x"), EpisodeConfig(k_shot=4, l_shot=4))
    path = tmp_path / "episodes.jsonl"
    assert dump_episodes(stream, path) == 2
    records = JsonUtils(path).read_records()
    assert records[0]["episode"] == 0
    assert len(records[1]["domain_query"]) == 4
