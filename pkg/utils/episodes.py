"""
Flux de méta-tâches: triplets (support S, query Q, domain query Q′).

Chaque épisode consomme K + L échantillons distincts de D (permutation
seedée). Q′ est virtuel: tiré dans le pool de domaine, hors S ∪ Q de
l'épisode, sans entamer le budget de D.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.run_config import EpisodeConfig
from utils.errors import EpisodeError
from utils.jsonUtils import JsonUtils


logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int]]


@dataclass(frozen=True)
class Episode:
    """Une méta-tâche. `domain_query` vaut None quand aucun pool de domaine n'est donné."""
    index: int
    support: Tuple
    query: Tuple
    domain_query: Optional[Tuple] = None

    def ids(self, part: str) -> List[str]:
        items = getattr(self, part)
        return [] if items is None else [item.id for item in items]

    def to_record(self) -> dict:
        return {
            "episode": self.index,
            "support": self.ids("support"),
            "query": self.ids("query"),
            "domain_query": self.ids("domain_query") if self.domain_query is not None else None,
        }


def episode_count(n_samples: int, config: EpisodeConfig) -> int:
    return n_samples // (config.k_shot + config.l_shot)


def build_episode_stream(
    D: Sequence,
    domain_pool: Optional[Sequence],
    config: EpisodeConfig,
    seed: Optional[SeedLike] = None,
) -> List[Episode]:
    """
    Construit floor(|D| / (K+L)) épisodes.

    Args:
        D: échantillons poolés (chacun avec un `id`)
        domain_pool: pool de Q′, ou None (pas de Q′)
        config: K, L, graine
        seed: remplace config.seed (passes successives)

    Raises:
        EpisodeError: |D| < K+L, ou pool de domaine trop petit hors S ∪ Q
    """
    k, l = config.k_shot, config.l_shot
    n_episodes = episode_count(len(D), config)
    if n_episodes == 0:
        raise EpisodeError(f"insufficient samples for one episode: |D| = {len(D)} < K + L = {k + l}")

    rng = np.random.default_rng(config.seed if seed is None else seed)
    order = rng.permutation(len(D))

    stream: List[Episode] = []
    for index in range(n_episodes):
        chunk = order[index * (k + l):(index + 1) * (k + l)]
        support = tuple(D[i] for i in chunk[:k])
        query = tuple(D[i] for i in chunk[k:])

        domain_query = None
        if domain_pool is not None:
            used = {item.id for item in support} | {item.id for item in query}
            candidates = [item for item in domain_pool if item.id not in used]
            if len(candidates) < l:
                raise EpisodeError(
                    f"domain pool has {len(candidates)} samples outside episode {index}'s support/query, need L = {l}"
                )
            picks = rng.choice(len(candidates), size=l, replace=False)
            domain_query = tuple(candidates[i] for i in picks)

        stream.append(Episode(index, support, query, domain_query))

    logger.debug(f"[Episodes] Built {len(stream)} episodes from |D| = {len(D)} (K={k}, L={l})")
    return stream


def sample_task_batch(stream: Sequence[Episode], m: int, offset: int = 0) -> List[Episode]:
    """Les m épisodes suivants à partir de `offset` (le dernier lot peut être plus court)."""
    if not stream:
        raise EpisodeError("episode stream is empty")
    if m < 1:
        raise ValueError(f"tasks per batch must be >= 1, got {m}")
    return list(stream[offset:offset + m])


def iter_task_batches(stream: Sequence[Episode], m: int) -> Iterator[List[Episode]]:
    if m < 1:
        raise ValueError(f"tasks per batch must be >= 1, got {m}")
    for offset in range(0, len(stream), m):
        yield sample_task_batch(stream, m, offset)


def dump_episodes(
    stream: Sequence[Episode],
    path: Union[str, Path],
    pass_index: Optional[int] = None,
    append: bool = False,
) -> int:
    """Audit JSONL: index d'épisode et ids par ensemble (et passe, si donnée)."""
    records = []
    for episode in stream:
        record = episode.to_record()
        if pass_index is not None:
            record["pass"] = pass_index
        records.append(record)
    if not append:
        return JsonUtils(path).write_records(records)
    writer = JsonUtils(path)
    for record in records:
        writer.append_record(record)
    return len(records)
