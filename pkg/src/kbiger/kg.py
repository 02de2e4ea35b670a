"""Knowledge-graph storage, neighbourhood index and per-question subgraphs."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

import numpy as np

from . import _kernels as K
from .errors import InvalidArgumentError, InvalidStateError, ParseError

INVERSE_SUFFIX = "^-1"


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


def _csr(keys, n):
    """Group positions 0..len(keys)-1 by key into CSR (indptr, order)."""
    order = np.argsort(keys, kind="stable")
    counts = np.bincount(keys, minlength=n) if len(keys) else np.zeros(n, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, order.astype(np.int64)


@dataclass(eq=False)
class KnowledgeGraph:
    entities: list[str]
    relations: list[str]
    heads: np.ndarray
    rels: np.ndarray
    tails: np.ndarray
    entity_index: dict[str, int] = field(default=None, repr=False)
    relation_index: dict[str, int] = field(default=None, repr=False)

    def __post_init__(self):
        self.heads = np.asarray(self.heads, dtype=np.int64)
        self.rels = np.asarray(self.rels, dtype=np.int64)
        self.tails = np.asarray(self.tails, dtype=np.int64)
        if self.entity_index is None:
            self.entity_index = {e: i for i, e in enumerate(self.entities)}
        if self.relation_index is None:
            self.relation_index = {r: i for i, r in enumerate(self.relations)}
        # incident triples per entity, both positions; self-loops listed once
        n = len(self.entities)
        t = np.arange(len(self.heads), dtype=np.int64)
        loops = self.heads == self.tails
        ents = np.concatenate([self.heads, self.tails[~loops]])
        tri = np.concatenate([t, t[~loops]])
        indptr, order = _csr(ents, n)
        self._inc_ptr = indptr
        self._inc_tri = tri[order]
        # undirected neighbour CSR for BFS
        nb_src = np.concatenate([self.heads, self.tails])
        nb_dst = np.concatenate([self.tails, self.heads])
        ptr, order = _csr(nb_src, n)
        self._nb_ptr = ptr
        self._nb_idx = nb_dst[order]

    @property
    def num_entities(self):
        return len(self.entities)

    @property
    def num_relations(self):
        return len(self.relations)

    @property
    def num_triples(self):
        return len(self.heads)

    def triples(self) -> list[Triple]:
        return [Triple(int(h), int(r), int(t)) for h, r, t in zip(self.heads, self.rels, self.tails)]

    def incident(self, e: int) -> np.ndarray:
        """Indices of triples containing entity ``e``."""
        return self._inc_tri[self._inc_ptr[e]:self._inc_ptr[e + 1]]

    def entity_id(self, name: str) -> int:
        try:
            return self.entity_index[name]
        except KeyError:
            raise InvalidArgumentError(f"unknown entity {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self.relation_index[name]
        except KeyError:
            raise InvalidArgumentError(f"unknown relation {name!r}") from None


@dataclass(eq=False)
class KnowledgeSubgraph(KnowledgeGraph):
    """Entity-reindexed view of a parent graph around a set of topic entities.

    Relation ids are shared with the parent so that embedding tables line up
    across subgraphs. ``source_ids[i]`` is the parent id of local entity ``i``.
    """

    topics: np.ndarray = None
    source_ids: np.ndarray = None
    inverse_flags: np.ndarray = None
    inverse_applied: bool = False
    num_base_relations: int = 0

    def __post_init__(self):
        super().__post_init__()
        self.topics = np.asarray(self.topics, dtype=np.int64)
        self.source_ids = np.asarray(self.source_ids, dtype=np.int64)
        if self.inverse_flags is None:
            self.inverse_flags = np.zeros(len(self.relations), dtype=bool)
        if not self.num_base_relations:
            self.num_base_relations = len(self.relations) - int(np.sum(self.inverse_flags))


def graph_from_triples(triples: Iterable[tuple[str, str, str]]) -> KnowledgeGraph:
    """Build vocabularies in first-appearance order and drop duplicate triples."""
    ent: dict[str, int] = {}
    rel: dict[str, int] = {}
    seen = set()
    hs, rs, ts = [], [], []
    for h, r, t in triples:
        hi = ent.setdefault(h, len(ent))
        ri = rel.setdefault(r, len(rel))
        ti = ent.setdefault(t, len(ent))
        if (hi, ri, ti) in seen:
            continue
        seen.add((hi, ri, ti))
        hs.append(hi)
        rs.append(ri)
        ts.append(ti)
    return KnowledgeGraph(list(ent), list(rel), hs, rs, ts, ent, rel)


def load_triples(path) -> KnowledgeGraph:
    """Read a TAB-separated ``head<TAB>relation<TAB>tail`` file. Blank lines are skipped."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise ParseError(f"expected 3 non-empty TAB-separated fields, got {len(parts)}",
                                 line=lineno, path=path)
            rows.append(parts)
    return graph_from_triples(rows)


def save_triples(g: KnowledgeGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in zip(g.heads, g.rels, g.tails):
            fh.write(f"{g.entities[h]}\t{g.relations[r]}\t{g.entities[t]}\n")


def neighborhood(g: KnowledgeGraph, e: int) -> frozenset[Triple]:
    """All triples with ``e`` as head or tail."""
    if not 0 <= e < g.num_entities:
        raise InvalidArgumentError(f"unknown entity id {e}")
    idx = g.incident(e)
    return frozenset(Triple(int(g.heads[i]), int(g.rels[i]), int(g.tails[i])) for i in idx)


def _check_topics(g, topics):
    topics = np.unique(np.asarray(list(topics), dtype=np.int64))
    if topics.size == 0:
        raise InvalidArgumentError("topic set is empty")
    bad = topics[(topics < 0) | (topics >= g.num_entities)]
    if bad.size:
        raise InvalidArgumentError(f"unknown topic id(s) {bad.tolist()}")
    return topics


def induced_subgraph(g: KnowledgeGraph, keep: np.ndarray, topics: np.ndarray) -> KnowledgeSubgraph:
    """Keep the given parent entity ids (order preserved) and all triples between them."""
    keep = np.asarray(keep, dtype=np.int64)
    local = np.full(g.num_entities, -1, dtype=np.int64)
    local[keep] = np.arange(len(keep))
    mask = (local[g.heads] >= 0) & (local[g.tails] >= 0)
    return KnowledgeSubgraph(
        entities=[g.entities[i] for i in keep],
        relations=list(g.relations),
        heads=local[g.heads[mask]],
        rels=g.rels[mask],
        tails=local[g.tails[mask]],
        relation_index=g.relation_index,
        topics=local[topics],
        source_ids=keep,
    )


def hop_distances(g: KnowledgeGraph, topics, max_depth: int) -> np.ndarray:
    """Undirected BFS distance from the nearest topic, -1 beyond ``max_depth``."""
    topics = _check_topics(g, topics)
    return K.bfs_distances(g._nb_ptr, g._nb_idx, topics, g.num_entities, max_depth)


def extract_subgraph_nhop(g: KnowledgeGraph, topics, n: int) -> KnowledgeSubgraph:
    if n < 1:
        raise InvalidArgumentError("hop bound must be >= 1")
    topics = _check_topics(g, topics)
    dist = hop_distances(g, topics, n)
    keep = np.flatnonzero(dist >= 0)
    return induced_subgraph(g, keep, topics)


def _transition(g: KnowledgeGraph):
    """Row-stochastic undirected transition matrix in CSR form; parallel edges add weight."""
    n = g.num_entities
    src = np.concatenate([g.heads, g.tails])
    dst = np.concatenate([g.tails, g.heads])
    loop = g.heads == g.tails
    loops = np.concatenate([loop, loop])
    src, dst = src[~loops], dst[~loops]
    indptr, order = _csr(src, n)
    indices = dst[order]
    deg = np.diff(indptr)
    weights = 1.0 / np.repeat(np.maximum(deg, 1), deg).astype(np.float64)
    return indptr, indices, weights


def personalized_pagerank(g: KnowledgeGraph, topics, damping=0.8, tol=1e-8, max_iter=100):
    """PPR scores with restart mass uniform over ``topics``; returns (scores, iterations)."""
    if not 0.0 < damping < 1.0:
        raise InvalidArgumentError("damping must lie in (0, 1)")
    topics = _check_topics(g, topics)
    restart = np.zeros(g.num_entities)
    restart[topics] = 1.0 / len(topics)
    indptr, indices, weights = _transition(g)
    return K.ppr(indptr, indices, weights, restart, damping, tol, max_iter)


def extract_subgraph_ppr(g: KnowledgeGraph, topics, damping=0.8, max_entities=2000) -> KnowledgeSubgraph:
    """Top-``max_entities`` PPR entities (topics always kept) plus induced triples.

    Entities with zero score (unreachable from every topic) are never kept.
    """
    topics = _check_topics(g, topics)
    if max_entities < len(topics):
        raise InvalidArgumentError("max_entities smaller than the topic set")
    scores, _ = personalized_pagerank(g, topics, damping)
    boosted = scores.copy()
    boosted[topics] = np.inf
    # descending score, ascending id on ties
    order = np.lexsort((np.arange(g.num_entities), -boosted))
    order = order[boosted[order] > 0][:max_entities]
    sg = induced_subgraph(g, np.sort(order), topics)
    sg.ppr_scores = scores[sg.source_ids]
    return sg


def add_inverse_relations(sg: KnowledgeSubgraph) -> KnowledgeSubgraph:
    """Append r^-1 for every relation and (t, r^-1, h) for every triple."""
    if sg.inverse_applied:
        raise InvalidStateError("inverse relations already materialized")
    R = len(sg.relations)
    rel_names = list(sg.relations) + [r + INVERSE_SUFFIX for r in sg.relations]
    return replace(
        sg,
        relations=rel_names,
        relation_index=None,
        heads=np.concatenate([sg.heads, sg.tails]),
        rels=np.concatenate([sg.rels, sg.rels + R]),
        tails=np.concatenate([sg.tails, sg.heads]),
        inverse_flags=np.concatenate([np.zeros(R, dtype=bool), np.ones(R, dtype=bool)]),
        inverse_applied=True,
        num_base_relations=R,
    )


def strip_inverse_relations(sg: KnowledgeSubgraph) -> KnowledgeSubgraph:
    """Project out inverse-flagged triples and relations."""
    if not sg.inverse_applied:
        return sg
    R = sg.num_base_relations
    keep = ~sg.inverse_flags[sg.rels]
    return replace(
        sg,
        relations=list(sg.relations[:R]),
        relation_index=None,
        heads=sg.heads[keep],
        rels=sg.rels[keep],
        tails=sg.tails[keep],
        inverse_flags=np.zeros(R, dtype=bool),
        inverse_applied=False,
        num_base_relations=R,
    )


def extract_subgraph(g: KnowledgeGraph, topics, mode="nhop", hops=2, damping=0.8,
                     max_entities=2000, inverse=True) -> KnowledgeSubgraph:
    """Dispatch on ``mode`` ("nhop" or "ppr"); adds inverse relations by default."""
    if mode == "nhop":
        sg = extract_subgraph_nhop(g, topics, hops)
    elif mode == "ppr":
        sg = extract_subgraph_ppr(g, topics, damping, max_entities)
    else:
        raise InvalidArgumentError(f"unknown subgraph mode {mode!r}")
    return add_inverse_relations(sg) if inverse else sg
