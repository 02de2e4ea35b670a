"""From QA examples to batched model inputs, and the encoder + reasoner composition."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .encoder import Vocabulary, encode_batch, tokenize
from .errors import UnanswerableError
from .kg import KnowledgeGraph, KnowledgeSubgraph, extract_subgraph
from .model import ModelConfig
from .reasoner import BatchTrace, GraphBatch, forward_batch


TOPIC_TOKEN = "<topic>"


def question_tokens(graph: KnowledgeGraph, question: str, topics=(), mask_topics=True) -> list[str]:
    """Tokenize a question; each mention of a topic entity's name becomes ``TOPIC_TOKEN``.

    The topic set is given to the reasoner directly, so the mention would only
    let the encoder memorize per-entity answers.
    """
    tokens = tokenize(question)
    if not mask_topics:
        return tokens
    names = [tokenize(graph.entities[t]) for t in topics if graph.entities[t].strip(" .,?!'\"")]
    names.sort(key=len, reverse=True)
    out, i = [], 0
    while i < len(tokens):
        for name in names:
            if tokens[i:i + len(name)] == name:
                out.append(TOPIC_TOKEN)
                i += len(name)
                break
        else:
            out.append(tokens[i])
            i += 1
    return out


def build_vocabulary(graph: KnowledgeGraph, examples, mask_topics=True) -> Vocabulary:
    """Training-question tokens, the topic placeholder, and every entity and relation name."""
    vocab = Vocabulary([TOPIC_TOKEN])
    for ex in examples:
        for tok in question_tokens(graph, ex.question, ex.topics, mask_topics):
            vocab.add(tok)
    for name in list(graph.entities) + list(graph.relations):
        if name.strip(" .,?!'\""):
            for tok in tokenize(name):
                vocab.add(tok)
    return vocab


def gold_distribution(answers, sg: KnowledgeSubgraph) -> np.ndarray:
    """Uniform mass over the parent-graph answer ids present in ``sg``."""
    local = {int(x): i for i, x in enumerate(sg.source_ids)}
    hit = sorted({local[a] for a in answers if a in local})
    if not hit:
        raise UnanswerableError("no gold answer inside the subgraph")
    gold = np.zeros(sg.num_entities)
    gold[hit] = 1.0 / len(hit)
    return gold


@dataclass
class Instance:
    example: object  # harness.QAExample
    tokens: list[str]
    token_ids: np.ndarray
    subgraph: KnowledgeSubgraph
    gold: np.ndarray
    path_entities: list[int] | None = None  # local ids, -1 when outside the subgraph

    @property
    def answers(self) -> set[int]:
        return {int(i) for i in np.flatnonzero(self.gold > 0)}


def prepare_instances(graph: KnowledgeGraph, examples, vocab: Vocabulary, mode="nhop", hops=2,
                      damping=0.8, max_entities=2000, mask_topics=True):
    """Tokenize, extract subgraphs and gold vectors. Returns (instances, skipped_count)."""
    out, skipped = [], 0
    for ex in examples:
        sg = extract_subgraph(graph, ex.topics, mode=mode, hops=hops, damping=damping,
                              max_entities=max_entities)
        try:
            gold = gold_distribution(ex.answers, sg)
        except UnanswerableError:
            skipped += 1
            continue
        tokens = question_tokens(graph, ex.question, ex.topics, mask_topics)
        path = None
        if ex.path_entities:
            local = {int(x): i for i, x in enumerate(sg.source_ids)}
            path = [local.get(int(e), -1) for e in ex.path_entities]
        out.append(Instance(ex, tokens, vocab.ids(tokens), sg, gold, path))
    return out, skipped


@dataclass
class Batch:
    instances: list[Instance]
    graph: GraphBatch
    token_ids: np.ndarray  # (B, L), 0-padded
    lengths: np.ndarray
    gold: np.ndarray  # (N,)


def make_batch(instances: Sequence[Instance]) -> Batch:
    lengths = np.array([len(x.token_ids) for x in instances], dtype=np.int64)
    ids = np.zeros((len(instances), int(lengths.max())), dtype=np.int64)
    for b, x in enumerate(instances):
        ids[b, :lengths[b]] = x.token_ids
    graph = GraphBatch.from_subgraphs([x.subgraph for x in instances])
    gold = np.concatenate([x.gold for x in instances])
    return Batch(list(instances), graph, ids, lengths, gold)


def run(params: Mapping[str, Tensor], batch: Batch, config: ModelConfig) -> BatchTrace:
    """Embed, encode and reason over a batch."""
    B, L = batch.token_ids.shape
    X = ag.reshape(ag.take_rows(params["word_emb"], batch.token_ids.reshape(-1)), (B, L, config.word_dim))
    H, q = encode_batch(X, batch.lengths, params)
    return forward_batch(H, q, batch.lengths, batch.graph, params, config.steps,
                         config.use_graph_summary)
