"""Iterative instruction generation and graph reasoning.

Every operation works on a :class:`GraphBatch`, the disjoint union of one or
more question subgraphs; per-question softmaxes run over segments. The
single-question entry points wrap their subgraph into a batch of one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .encoder import EncodedQuestion
from .errors import InvalidArgumentError
from .kg import KnowledgeSubgraph


@dataclass
class GraphBatch:
    subgraphs: list[KnowledgeSubgraph]
    offsets: np.ndarray  # (B + 1,) entity offsets
    seg: np.ndarray  # (N,) entity -> question index
    heads: np.ndarray
    rels: np.ndarray
    tails: np.ndarray
    triple_seg: np.ndarray
    p0: np.ndarray  # uniform over topic entities within each question

    @property
    def num_questions(self):
        return len(self.subgraphs)

    @property
    def num_entities(self):
        return int(self.offsets[-1])

    @classmethod
    def from_subgraphs(cls, subgraphs: Sequence[KnowledgeSubgraph]) -> "GraphBatch":
        sizes = np.array([sg.num_entities for sg in subgraphs], dtype=np.int64)
        if np.any(sizes == 0):
            raise InvalidArgumentError("empty subgraph")
        offsets = np.zeros(len(subgraphs) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        seg = np.repeat(np.arange(len(subgraphs)), sizes)
        p0 = np.zeros(offsets[-1])
        for b, sg in enumerate(subgraphs):
            topics = np.unique(sg.topics)
            if topics.size == 0:
                raise InvalidArgumentError("no topic entity present in subgraph")
            p0[offsets[b] + topics] = 1.0 / topics.size
        heads = np.concatenate([sg.heads + offsets[b] for b, sg in enumerate(subgraphs)])
        tails = np.concatenate([sg.tails + offsets[b] for b, sg in enumerate(subgraphs)])
        rels = np.concatenate([sg.rels for sg in subgraphs])
        triple_seg = np.repeat(np.arange(len(subgraphs)), [sg.num_triples for sg in subgraphs])
        return cls(list(subgraphs), offsets, seg, heads.astype(np.int64), rels.astype(np.int64),
                   tails.astype(np.int64), triple_seg, p0)


def as_graph_batch(graph) -> GraphBatch:
    return graph if isinstance(graph, GraphBatch) else GraphBatch.from_subgraphs([graph])


@dataclass
class ReasonerState:
    step: int
    entity_embeddings: np.ndarray
    entity_distribution: np.ndarray
    instruction: np.ndarray
    graph_summary: np.ndarray
    instruction_attention: np.ndarray
    graph_attention: np.ndarray


@dataclass
class ForwardTrace:
    states: list[ReasonerState]
    answers: set[int] = field(default_factory=set)
    subgraph: KnowledgeSubgraph | None = None
    tokens: list[str] | None = None

    def __len__(self):
        return len(self.states)

    @property
    def final_distribution(self):
        return self.states[-1].entity_distribution

    def distributions(self):
        return [s.entity_distribution for s in self.states]


@dataclass
class BatchTrace:
    """Per-step tensors for a whole batch; index 0 is the initialization."""

    graph: GraphBatch
    lengths: np.ndarray
    E: list[Tensor]
    p: list[Tensor]
    i: list[Tensor]
    e_graph: list[Tensor]
    alpha: list[Tensor]
    alpha_e: list[Tensor]

    @property
    def steps(self):
        return len(self.p) - 1

    def split(self, threshold=0.5) -> list[ForwardTrace]:
        g = self.graph
        traces = []
        for b in range(g.num_questions):
            lo, hi = g.offsets[b], g.offsets[b + 1]
            ln = self.lengths[b]
            states = [
                ReasonerState(
                    step=k,
                    entity_embeddings=self.E[k].data[lo:hi].copy(),
                    entity_distribution=self.p[k].data[lo:hi].copy(),
                    instruction=self.i[k].data[b].copy(),
                    graph_summary=self.e_graph[k].data[b].copy(),
                    instruction_attention=self.alpha[k].data[b, :ln].copy(),
                    graph_attention=self.alpha_e[k].data[lo:hi].copy(),
                )
                for k in range(len(self.p))
            ]
            tr = ForwardTrace(states, subgraph=g.subgraphs[b])
            tr.answers = select_answers(tr.final_distribution, threshold)
            traces.append(tr)
        return traces


# ---------------------------------------------------------------- operations


def init_entity_embeddings(graph, params: Mapping[str, Tensor]) -> Tensor:
    """sigmoid(W_E_init . sum of relation embeddings over triples ending at the entity)."""
    g = as_graph_batch(graph)
    r = ag.take_rows(params["rel_emb"], g.rels)
    summed = ag.segment_sum(r, g.tails, g.num_entities)
    return ag.sigmoid(ag.affine(summed, params["W_E_init"]))


def aggregate_graph(E, q, params: Mapping[str, Tensor], graph=None):
    """Question-guided attention pooling of entity embeddings.

    ``q`` is (B, d); with ``graph`` omitted, E is one question's (N, d) matrix
    and q may be a d-vector. Returns (e_graph (B, d), alpha_e (N,)).
    """
    E = ag.as_tensor(E)
    q = ag.as_tensor(q)
    if graph is None:
        seg, B = np.zeros(E.shape[0], dtype=np.int64), 1
        if q.ndim == 1:
            q = ag.reshape(q, (1, -1))
    else:
        g = as_graph_batch(graph)
        seg, B = g.seg, g.num_questions
    q_rows = ag.take_rows(q, seg)
    beta = ag.inner(q_rows, ag.affine(E, params["W_gate"], params["b_q"]))
    alpha_e = ag.segment_softmax(beta, seg, B)
    weighted = ag.mul(ag.reshape(alpha_e, (-1, 1)), E)
    return ag.segment_sum(weighted, seg, B), alpha_e


def next_instruction(i_prev, q, e_graph_prev, H, k: int, params: Mapping[str, Tensor],
                     mask=None, use_graph_summary=True):
    """Attend over question tokens with a query built from the previous step.

    Shapes are batched: i_prev, q, e_graph_prev (B, d); H (B, L, d); mask (B, L).
    Returns (i_k (B, d), alpha (B, L)).
    """
    H = ag.as_tensor(H)
    B, L, d = H.shape
    W, b = params[f"instr_W.{k}"], params[f"instr_b.{k}"]
    parts = [i_prev, q, e_graph_prev] if use_graph_summary else [i_prev, q]
    if W.shape[1] != d * len(parts) or ag.as_tensor(i_prev).shape[-1] != d:
        raise InvalidArgumentError(f"instruction weights {W.shape} do not fit hidden size {d}")
    q_k = ag.affine(ag.concatenate(parts, axis=-1), W, b)
    prod = ag.mul(ag.reshape(q_k, (B, 1, d)), H)
    # score_j = 1^T W_alpha (q_k * h_j)
    alpha_row = ag.sum(params["W_alpha"], axis=0)
    scores = ag.matmul(prod, alpha_row)
    alpha = ag.softmax(scores, axis=-1, mask=mask)
    i_k = ag.sum(ag.mul(ag.reshape(alpha, (B, L, 1)), H), axis=1)
    return i_k, alpha


def _update_map(E_prev, e_hat, params, depth):
    x = ag.concatenate([E_prev, e_hat], axis=-1)
    for layer in range(depth):
        x = ag.sigmoid(ag.affine(x, params[f"update_W.{layer}"], params[f"update_b.{layer}"]))
    return x


def reason_step(i_k, E_prev, p_prev, graph, params: Mapping[str, Tensor], mlp_depth=None):
    """One message-passing hop guided by instruction ``i_k`` (B, d).

    Returns (E_k (N, d), p_k (N,)).
    """
    g = as_graph_batch(graph)
    i_k = ag.as_tensor(i_k)
    if i_k.ndim == 1:
        i_k = ag.reshape(i_k, (1, -1))
    if mlp_depth is None:
        mlp_depth = sum(1 for name in params if name.startswith("update_W."))
    rel_proj = ag.affine(params["rel_emb"], params["W_R"])
    # matching vectors depend only on (question, relation): build them once per pair
    B, d = i_k.shape
    R = rel_proj.shape[0]
    pair = ag.mul(ag.reshape(i_k, (B, 1, d)), ag.reshape(rel_proj, (1, R, d)))
    match_table = ag.reshape(ag.sigmoid(pair), (B * R, d))
    match = ag.take_rows(match_table, g.triple_seg * R + g.rels)
    src_p = ag.reshape(ag.take_rows(p_prev, g.heads), (-1, 1))
    e_hat = ag.segment_sum(ag.mul(src_p, match), g.tails, g.num_entities)
    E_k = _update_map(E_prev, e_hat, params, mlp_depth)
    p_k = ag.segment_softmax(ag.matmul(E_k, params["w_score"]), g.seg, g.num_questions)
    return E_k, p_k


def forward_batch(H, q, lengths, graph, params: Mapping[str, Tensor], steps: int,
                  use_graph_summary=True) -> BatchTrace:
    """Alternate instruction generation and reasoning for ``steps`` hops."""
    if steps < 1:
        raise InvalidArgumentError("steps must be >= 1")
    g = as_graph_batch(graph)
    H, q = ag.as_tensor(H), ag.as_tensor(q)
    lengths = np.asarray(lengths, dtype=np.int64)
    B, L, _ = H.shape
    mask = np.arange(L)[None, :] < lengths[:, None]
    depth = sum(1 for name in params if name.startswith("update_W."))

    E = init_entity_embeddings(g, params)
    p = Tensor(g.p0)
    i = q
    alpha0 = np.zeros((B, L))
    alpha0[np.arange(B), lengths - 1] = 1.0
    e_graph, alpha_e = aggregate_graph(E, q, params, g)
    tr = BatchTrace(g, lengths, [E], [p], [i], [e_graph], [Tensor(alpha0)], [alpha_e])
    for k in range(1, steps + 1):
        i, alpha = next_instruction(i, q, e_graph, H, k, params, mask, use_graph_summary)
        E, p = reason_step(i, E, p, g, params, depth)
        e_graph, alpha_e = aggregate_graph(E, q, params, g)
        for lst, val in ((tr.E, E), (tr.p, p), (tr.i, i), (tr.e_graph, e_graph),
                         (tr.alpha, alpha), (tr.alpha_e, alpha_e)):
            lst.append(val)
    return tr


def forward(eq: EncodedQuestion, sg: KnowledgeSubgraph, params: Mapping[str, Tensor], steps: int,
            use_graph_summary=True, threshold=0.5) -> ForwardTrace:
    """Run one encoded question over its subgraph and return the full trace."""
    H = ag.reshape(eq.token_vectors, (1,) + eq.token_vectors.shape)
    q = ag.reshape(eq.question_vector, (1, -1))
    bt = forward_batch(H, q, [eq.token_count], sg, params, steps, use_graph_summary)
    return bt.split(threshold)[0]


def select_answers(p_final, threshold=0.5) -> set[int]:
    """Entities with probability above ``threshold``, else the argmax (lowest id on ties)."""
    p = np.asarray(p_final)
    chosen = np.flatnonzero(p > threshold)
    if chosen.size == 0:
        chosen = [int(np.argmax(p))]
    return {int(e) for e in chosen}


def trace_records(trace: ForwardTrace, top=10) -> list[dict]:
    """One JSON-ready record per step: top entities, token and entity attention."""
    names = trace.subgraph.entities if trace.subgraph is not None else None

    def label(e):
        return names[e] if names is not None else int(e)

    out = []
    for s in trace.states:
        p = s.entity_distribution
        order = np.lexsort((np.arange(p.size), -p))[:top]
        att_order = np.lexsort((np.arange(p.size), -s.graph_attention))[:top]
        rec = {
            "step": s.step,
            "top_entities": [[label(e), float(p[e])] for e in order],
            "token_attention": [float(a) for a in s.instruction_attention],
            "entity_attention": [[label(e), float(s.graph_attention[e])] for e in att_order],
        }
        if trace.tokens is not None:
            rec["tokens"] = list(trace.tokens)
        out.append(rec)
    return out


def write_trace(trace: ForwardTrace, path, top=10) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace_records(trace, top):
            fh.write(json.dumps(rec) + "\n")
