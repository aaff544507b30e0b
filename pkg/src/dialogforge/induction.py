"""Strategy mining: extract one strategy per history/instruction pair,
cluster similar strategies by embedding, and generalize each cluster into a
single high-level strategy.

The clustering is a greedy two-pass scheme over cosine similarity: foci are
collected in input order (a strategy too similar to an existing focus is
absorbed instead of founding its own cluster), then every absorbed strategy
is assigned to its most similar focus.  The result is a partition, so the
number of clusters falls out of the threshold rather than being chosen up
front.  Similarity is computed exactly, not via approximatenearest-neighbor
search, so identical inputs always produce identical clusters.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import prompts
from ._kernels import greedy_cluster
from .corpus import HistoryInstructionPair
from .errors import EmptyCompletion, ParseFailure, ZeroVector
from .parsing import parse_json_object
from .providers import ChatProvider, EmbeddingProvider, chat_request

logger = logging.getLogger(__name__)

POOL_SCHEMA_VERSION = 1
MAX_STRATEGY_CHARS = 200

DEFAULT_EPSILON = 0.5
EPSILON_PRESETS = (0.4, 0.5, 0.6)


@dataclass
class OriginalStrategy:
    id: str
    text: str
    analysis: str
    source_pair: tuple[str, int]
    embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        self.text = self.text.strip()
        if not self.text:
            raise ValueError("strategy text must be non-empty")
        if len(self.text) > MAX_STRATEGY_CHARS:
            raise ValueError(f"strategy text exceeds {MAX_STRATEGY_CHARS} characters")


@dataclass(frozen=True)
class StrategyCluster:
    focus_id: str
    member_ids: tuple[str, ...]

    def __post_init__(self):
        if self.focus_id not in self.member_ids:
            raise ValueError("focus must be one of the members")
        if len(set(self.member_ids)) != len(self.member_ids):
            raise ValueError("cluster members must be distinct")


@dataclass
class HighLevelStrategy:
    id: str
    text: str
    cluster: StrategyCluster
    embedding: Optional[np.ndarray] = None


@dataclass
class StrategyPool:
    originals: list[OriginalStrategy]
    clusters: list[StrategyCluster]
    high_level: list[HighLevelStrategy]
    epsilon: float
    pair_to_high_level: dict[tuple[str, int], str] = field(default_factory=dict)

    def original_by_id(self, sid: str) -> OriginalStrategy:
        return self._originals_index()[sid]

    def _originals_index(self) -> dict[str, OriginalStrategy]:
        if not hasattr(self, "_orig_idx") or len(self._orig_idx) != len(self.originals):
            self._orig_idx = {s.id: s for s in self.originals}
        return self._orig_idx

    def high_level_by_id(self, hid: str) -> HighLevelStrategy:
        for strategy in self.high_level:
            if strategy.id == hid:
                return strategy
        raise KeyError(hid)


@dataclass
class PoolBuildResult:
    pool: StrategyPool
    extraction_failures: list[tuple[str, int, str]] = field(default_factory=list)
    abstraction_fallbacks: int = 0


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def extract_strategy(
    pair: HistoryInstructionPair,
    chat: ChatProvider,
    strategy_id: str = "os-000000",
    template_dir: Optional[str | Path] = None,
) -> OriginalStrategy:
    """Ask the extractor role why this instruction follows this history.

    The completion must be a JSON object carrying "analysis" and "strategy";
    one re-ask is allowed before the pair is given up with ``ParseFailure``.
    """
    template = prompts.load_template("extraction", template_dir)
    rendered = prompts.render(
        template,
        dialogue_history=prompts.render_history(pair.history),
        instruction=pair.instruction,
    )
    request = chat_request("extractor", rendered)
    last_reason = "unparseable completion"
    for _ in range(2):
        completion = chat.complete(request)
        obj = parse_json_object(completion)
        if obj is None or not isinstance(obj.get("strategy"), str):
            last_reason = "missing 'strategy' key"
            continue
        try:
            return OriginalStrategy(
                id=strategy_id,
                text=obj["strategy"],
                analysis=str(obj.get("analysis", "")),
                source_pair=(pair.dialogue_id, pair.t),
            )
        except ValueError as exc:
            last_reason = str(exc)
    raise ParseFailure(f"{pair.dialogue_id}/t={pair.t}: {last_reason}")


def extract_strategies(
    pairs: Sequence[HistoryInstructionPair],
    chat: ChatProvider,
    template_dir: Optional[str | Path] = None,
    precomputed: Optional[dict[tuple[str, int], Optional[OriginalStrategy]]] = None,
    on_extracted: Optional[Callable[[HistoryInstructionPair, Optional[OriginalStrategy]], None]] = None,
    max_parallel: int = 1,
) -> tuple[list[OriginalStrategy], list[tuple[str, int, str]]]:
    """Extract over many pairs, skipping and tallying parse failures.

    ``precomputed`` short-circuits pairs already handled (checkpoint resume);
    ``on_extracted`` fires once per freshly processed pair, with None for a
    failure, so callers can persist progress.
    """
    precomputed = precomputed or {}

    def run_one(index_pair):
        index, pair = index_pair
        key = (pair.dialogue_id, pair.t)
        if key in precomputed:
            return precomputed[key], None
        try:
            strategy = extract_strategy(pair, chat, f"os-{index:06d}", template_dir)
        except ParseFailure as exc:
            if on_extracted:
                on_extracted(pair, None)
            return None, (pair.dialogue_id, pair.t, str(exc))
        if on_extracted:
            on_extracted(pair, strategy)
        return strategy, None

    items = list(enumerate(pairs))
    if max_parallel > 1:
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            outcomes = list(pool.map(run_one, items))
    else:
        outcomes = [run_one(item) for item in items]

    strategies, failures = [], []
    for strategy, failure in outcomes:
        if strategy is not None:
            strategies.append(strategy)
        if failure is not None:
            failures.append(failure)
    return strategies, failures


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

def _fill_embeddings(
    strategies: Sequence[OriginalStrategy],
    embed: EmbeddingProvider,
    batch_size: int = 64,
) -> None:
    missing = [s for s in strategies if s.embedding is None]
    for start in range(0, len(missing), batch_size):
        chunk = missing[start : start + batch_size]
        vectors = embed.embed_batch([s.text for s in chunk])
        for strategy, vec in zip(chunk, vectors):
            strategy.embedding = vec


def cluster_strategies(
    strategies: Sequence[OriginalStrategy],
    epsilon: float,
    embed: EmbeddingProvider,
) -> list[StrategyCluster]:
    """Partition strategies by greedy threshold clustering in input order.

    Missing embeddings are fetched first.  Both passes are strictly
    sequential and deterministic; see the module docstring for the scheme.
    """
    if not strategies:
        raise ValueError("strategies must be non-empty")
    _fill_embeddings(strategies, embed)
    matrix = np.stack([s.embedding for s in strategies]).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector("degenerate embedding with zero norm")
    matrix /= norms[:, None]

    focus_idx, assignments = greedy_cluster(matrix, float(epsilon))
    members: dict[int, list[str]] = {int(f): [] for f in focus_idx}
    for i, owner in enumerate(assignments):
        members[int(owner)].append(strategies[i].id)
    return [
        StrategyCluster(
            focus_id=strategies[int(f)].id,
            member_ids=tuple(members[int(f)]),
        )
        for f in focus_idx
    ]


# ---------------------------------------------------------------------------
# Abstraction
# ---------------------------------------------------------------------------

_HL_LABEL = "high-level instruction strategy:"


def abstract_cluster(
    cluster: StrategyCluster,
    originals_by_id: dict[str, OriginalStrategy],
    chat: ChatProvider,
    strategy_id: str = "hl-0000",
    template_dir: Optional[str | Path] = None,
) -> HighLevelStrategy:
    """Generalize a cluster's member strategies into one phrase.

    The completion is taken verbatim (trimmed, any echoed label stripped);
    an empty completion gets one re-ask before ``EmptyCompletion``.
    """
    texts = [originals_by_id[mid].text for mid in cluster.member_ids]
    template = prompts.load_template("abstraction", template_dir)
    rendered = prompts.render(template, strategy_list=prompts.render_strategy_list(texts))
    request = chat_request("abstractor", rendered)
    for _ in range(2):
        completion = chat.complete(request).strip()
        if completion.lower().startswith(_HL_LABEL):
            completion = completion[len(_HL_LABEL):].strip()
        if completion:
            return HighLevelStrategy(id=strategy_id, text=completion, cluster=cluster)
    raise EmptyCompletion(f"cluster focus {cluster.focus_id}")


# ---------------------------------------------------------------------------
# Pool assembly
# ---------------------------------------------------------------------------

def assemble_pool(
    originals: list[OriginalStrategy],
    epsilon: float,
    chat: ChatProvider,
    embed: EmbeddingProvider,
    template_dir: Optional[str | Path] = None,
) -> tuple[StrategyPool, int]:
    """Cluster extracted strategies and abstract every cluster.

    A cluster whose abstraction keeps coming back empty falls back to its
    focus strategy's text so the partition stays total; the count of such
    fallbacks is returned for the run manifest.
    """
    if not originals:
        raise ValueError("no strategies to assemble")
    clusters = cluster_strategies(originals, epsilon, embed)
    by_id = {s.id: s for s in originals}

    high_level: list[HighLevelStrategy] = []
    fallbacks = 0
    for i, cluster in enumerate(clusters):
        hid = f"hl-{i:04d}"
        try:
            high_level.append(abstract_cluster(cluster, by_id, chat, hid, template_dir))
        except EmptyCompletion:
            fallbacks += 1
            high_level.append(
                HighLevelStrategy(id=hid, text=by_id[cluster.focus_id].text, cluster=cluster)
            )
    hl_vectors = embed.embed_batch([h.text for h in high_level])
    for strategy, vec in zip(high_level, hl_vectors):
        strategy.embedding = vec

    member_to_hl = {
        mid: hl.id for hl in high_level for mid in hl.cluster.member_ids
    }
    pair_to_high_level = {
        s.source_pair: member_to_hl[s.id] for s in originals
    }
    pool = StrategyPool(
        originals=originals,
        clusters=clusters,
        high_level=high_level,
        epsilon=epsilon,
        pair_to_high_level=pair_to_high_level,
    )
    return pool, fallbacks


def build_pool(
    pairs: Sequence[HistoryInstructionPair],
    epsilon: float,
    chat: ChatProvider,
    embed: EmbeddingProvider,
    template_dir: Optional[str | Path] = None,
    precomputed: Optional[dict[tuple[str, int], Optional[OriginalStrategy]]] = None,
    on_extracted: Optional[Callable] = None,
    max_parallel: int = 1,
) -> PoolBuildResult:
    """Extract, cluster, and abstract; fails only if no strategy survives."""
    if not pairs:
        raise ValueError("pairs must be non-empty")
    originals, failures = extract_strategies(
        pairs, chat, template_dir, precomputed, on_extracted, max_parallel
    )
    if not originals:
        raise ParseFailure("every extraction failed; nothing to cluster")
    pool, fallbacks = assemble_pool(originals, epsilon, chat, embed, template_dir)
    logger.info(
        "pool built: %d originals -> %d clusters (%d extraction failures)",
        len(originals), len(pool.clusters), len(failures),
    )
    return PoolBuildResult(pool=pool, extraction_failures=failures,
                           abstraction_fallbacks=fallbacks)


def high_level_frequencies(pool: StrategyPool) -> dict[str, int]:
    """How many source pairs map to each high-level strategy."""
    counts: dict[str, int] = {h.id: 0 for h in pool.high_level}
    for hid in pool.pair_to_high_level.values():
        counts[hid] += 1
    return counts


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def pool_to_json(pool: StrategyPool) -> dict:
    cluster_index = {id(c): i for i, c in enumerate(pool.clusters)}
    return {
        "version": POOL_SCHEMA_VERSION,
        "epsilon": pool.epsilon,
        "originals": [
            {
                "id": s.id,
                "text": s.text,
                "analysis": s.analysis,
                "source": [s.source_pair[0], s.source_pair[1]],
                "embedding": [float(x) for x in s.embedding] if s.embedding is not None else None,
            }
            for s in pool.originals
        ],
        "clusters": [
            {"focus_id": c.focus_id, "member_ids": list(c.member_ids)}
            for c in pool.clusters
        ],
        "high_level": [
            {
                "id": h.id,
                "text": h.text,
                "cluster_index": cluster_index[id(h.cluster)],
                "embedding": [float(x) for x in h.embedding] if h.embedding is not None else None,
            }
            for h in pool.high_level
        ],
        "pair_to_high_level": [
            [did, t, hid] for (did, t), hid in sorted(pool.pair_to_high_level.items())
        ],
    }


def save_pool(pool: StrategyPool, path: str | Path) -> None:
    payload = json.dumps(pool_to_json(pool), ensure_ascii=False, sort_keys=True, indent=2)
    Path(path).write_text(payload + "\n", encoding="utf-8")


def load_pool(path: str | Path) -> StrategyPool:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("version") != POOL_SCHEMA_VERSION:
        raise ValueError(f"unsupported pool schema version {data.get('version')!r}")
    originals = [
        OriginalStrategy(
            id=item["id"],
            text=item["text"],
            analysis=item.get("analysis", ""),
            source_pair=(item["source"][0], int(item["source"][1])),
            embedding=np.asarray(item["embedding"], dtype=np.float64)
            if item.get("embedding") is not None
            else None,
        )
        for item in data["originals"]
    ]
    clusters = [
        StrategyCluster(focus_id=item["focus_id"], member_ids=tuple(item["member_ids"]))
        for item in data["clusters"]
    ]
    high_level = [
        HighLevelStrategy(
            id=item["id"],
            text=item["text"],
            cluster=clusters[item["cluster_index"]],
            embedding=np.asarray(item["embedding"], dtype=np.float64)
            if item.get("embedding") is not None
            else None,
        )
        for item in data["high_level"]
    ]
    return StrategyPool(
        originals=originals,
        clusters=clusters,
        high_level=high_level,
        epsilon=float(data["epsilon"]),
        pair_to_high_level={
            (did, int(t)): hid for did, t, hid in data["pair_to_high_level"]
        },
    )
