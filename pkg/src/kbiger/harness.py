"""Metrics, synthetic multi-hop data with a symbolic oracle, and revision analysis."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, InvalidArgumentError
from .kg import KnowledgeGraph, graph_from_triples


@dataclass
class QAExample:
    id: str
    question: str
    topics: list[int]
    answers: list[int]
    path: list[int] | None = None  # relation ids, one per hop
    path_entities: list[int] | None = None  # entity reached at each hop

    def gold_path(self):
        if self.path is None:
            return None
        ents = self.path_entities or [None] * len(self.path)
        return list(zip(self.path, ents))


class GenerationError(DataError):
    pass


# ---------------------------------------------------------------- metrics


def _final(trace_or_p):
    if hasattr(trace_or_p, "final_distribution"):
        return np.asarray(trace_or_p.final_distribution)
    return np.asarray(trace_or_p)


def hits_at_1(trace, gold) -> int:
    """1 if the argmax entity (lowest id on ties) is a gold answer."""
    p = _final(trace)
    return int(int(np.argmax(p)) in set(gold))


def f1_score(predicted, gold) -> float:
    predicted, gold = set(predicted), set(gold)
    if not gold:
        raise InvalidArgumentError("gold answer set is empty")
    tp = len(predicted & gold)
    if tp == 0:
        return 0.0
    precision = tp / len(predicted)
    recall = tp / len(gold)
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------- oracle


def oracle_answer(g: KnowledgeGraph, topics: Iterable[int], path: Sequence[int]) -> set[int]:
    """Breadth-first relational composition of ``path`` starting from ``topics``."""
    current = {int(t) for t in topics}
    for r in path:
        if not 0 <= r < g.num_relations:
            raise InvalidArgumentError(f"unknown relation id {r}")
        sel = (g.rels == r) & np.isin(g.heads, list(current))
        current = {int(t) for t in g.tails[sel]}
    return current


def hop_sets(g: KnowledgeGraph, topics, path) -> list[set[int]]:
    """Entity sets reached after each prefix of ``path`` (index 0 = topics)."""
    sets = [set(int(t) for t in topics)]
    for k in range(1, len(path) + 1):
        sets.append(oracle_answer(g, topics, path[:k]))
    return sets


# ---------------------------------------------------------------- synthetic data


@dataclass
class SyntheticSpec:
    entities: int = 150
    relations: int = 10
    hops: int = 1
    questions: int = 300
    distractor_branching: int = 3
    ambiguity: float = 0.0

    def validate(self):
        if self.hops < 1:
            raise GenerationError("hops must be >= 1")
        if self.entities < self.hops + 1:
            raise GenerationError("need at least hops + 1 entities")
        if self.relations < 1 or self.questions < 1:
            raise GenerationError("need at least one relation and one question")
        if self.distractor_branching < 0:
            raise GenerationError("distractor_branching must be >= 0")
        if self.distractor_branching + 1 > self.relations:
            raise GenerationError("distractor_branching needs more distinct relations")
        if not 0.0 <= self.ambiguity <= 1.0:
            raise GenerationError("ambiguity must lie in [0, 1]")
        if self.ambiguity > 0:
            if self.hops < 2:
                raise GenerationError("ambiguity injection needs hops >= 2")
            if self.relations < 4:
                raise GenerationError("ambiguity injection needs >= 4 relations")


@dataclass
class SyntheticDataset:
    graph: KnowledgeGraph
    examples: list[QAExample]
    lexicon: dict[str, str]  # relation name -> surface word
    spec: SyntheticSpec = field(default_factory=SyntheticSpec)


class _GraphBuilder:
    def __init__(self, num_entities):
        self.out: list[dict[int, int]] = [dict() for _ in range(num_entities)]  # rel -> tail

    def add(self, h, r, t):
        self.out[h].setdefault(r, t)
        return self.out[h][r]


def _render(words: Sequence[str], topic: str) -> str:
    # last hop first: "who r7 of r3 of e12"
    return "who " + " of ".join(reversed(list(words))) + " of " + topic


def generate_synthetic_dataset(seed: int, spec: SyntheticSpec) -> SyntheticDataset:
    """Random graph with planted relation-path questions.

    Each entity has at most one tail per relation, so every planted path has a
    unique answer. With ``ambiguity > 0`` that fraction of questions is built
    around two near-identical topic-adjacent entities (same relation from the
    topic, same kind marker); only the gold one continues, and which of two
    relation words in the question applies at hop 2 is fixed by the hop-1
    entity's kind marker (``kind_a`` selects the first-class relation).
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    n_amb = int(round(spec.ambiguity * spec.questions))
    n_plain = spec.questions - n_amb
    n_reserved = 2 * n_amb
    n_free = spec.entities - n_reserved
    if n_free < spec.hops + 1 + (1 if n_amb else 0):
        raise GenerationError("not enough entities for the requested ambiguity")

    ent_names = [f"E{i}" for i in range(spec.entities)]
    base_rel = [f"r{i}" for i in range(spec.relations)]
    rel_names = base_rel + (["kind_a", "kind_b"] if n_amb else [])
    lexicon = {r: r for r in base_rel}
    KIND_A, KIND_B = spec.relations, spec.relations + 1
    half = spec.relations // 2
    class_a, class_b = np.arange(half), np.arange(half, spec.relations)

    gb = _GraphBuilder(spec.entities)
    drafts = []  # (topic, path rels, path ents, words)

    def add_distractors(e, exclude):
        free = [r for r in range(spec.relations) if r not in gb.out[e] and r not in exclude]
        k = min(spec.distractor_branching, len(free))
        for r in rng.choice(free, size=k, replace=False) if k else []:
            t = int(rng.integers(n_free))
            if t == e:
                t = (t + 1) % n_free
            gb.add(e, int(r), t)

    # ambiguous questions go first, while topics still have free relation slots
    reserved = list(range(n_free, spec.entities))
    for j in range(n_amb):
        x, twin = reserved[2 * j], reserved[2 * j + 1]
        open_topics = [e for e in range(n_free) if len(gb.out[e]) < spec.relations]
        if not open_topics:
            raise GenerationError("no entity has a free relation left for an ambiguous question")
        topic = int(rng.choice(open_topics))
        free = [r for r in range(spec.relations) if r not in gb.out[topic]]
        r1 = int(rng.choice(free))
        gb.add(topic, r1, x)
        kind = KIND_A if j % 2 == 0 else KIND_B
        ra, rb = int(rng.choice(class_a)), int(rng.choice(class_b))
        ta, tb = (int(t) for t in rng.choice(n_free, size=2, replace=False))
        gb.add(x, ra, ta)
        gb.add(x, rb, tb)
        marker = int(rng.integers(n_free))
        gb.add(x, kind, marker)
        gb.add(twin, kind, marker)
        gold_r, gold_t = (ra, ta) if kind == KIND_A else (rb, tb)
        words = [lexicon[rel_names[ra]], lexicon[rel_names[rb]]]
        rng.shuffle(words)
        drafts.append((topic, [r1, gold_r], [x, gold_t], [lexicon[rel_names[r1]], " or ".join(words)],
                       twin, r1))

    for _ in range(n_plain):
        topic = int(rng.integers(n_free))
        ents, rels = [topic], []
        for _hop in range(spec.hops):
            cur = ents[-1]
            r = int(rng.integers(spec.relations))
            if r in gb.out[cur]:
                nxt = gb.out[cur][r]
            else:
                choices = [e for e in range(n_free) if e not in ents]
                nxt = gb.add(cur, r, int(rng.choice(choices)))
            rels.append(r)
            ents.append(nxt)
        for e in ents[:-1]:
            add_distractors(e, set())
        drafts.append((topic, rels, ents[1:], [lexicon[rel_names[r]] for r in rels]))

    # the twin edge is added last so it cannot be shadowed by the plain planting
    triples = []
    for h, outs in enumerate(gb.out):
        for r, t in outs.items():
            triples.append((ent_names[h], rel_names[r], ent_names[t]))
    twin_edges = [(ent_names[d[0]], rel_names[d[5]], ent_names[d[4]]) for d in drafts if len(d) == 6]
    g = graph_from_triples(triples + twin_edges)

    examples = []
    order = rng.permutation(len(drafts))
    for idx, di in enumerate(order):
        d = drafts[di]
        topic, rels, ents, words = d[:4]
        tid = g.entity_index[ent_names[topic]]
        rids = [g.relation_index[rel_names[r]] for r in rels]
        eids = [g.entity_index[ent_names[e]] for e in ents]
        answers = sorted(oracle_answer(g, [tid], rids))
        if eids[-1] not in answers:
            raise GenerationError("planted answer not reachable; generator bug")
        examples.append(QAExample(
            id=f"q{idx:05d}",
            question=_render(words, ent_names[topic]),
            topics=[tid],
            answers=answers,
            path=rids,
            path_entities=eids,
        ))
    return SyntheticDataset(g, examples, {r: lexicon.get(r, r) for r in rel_names}, spec)


# ---------------------------------------------------------------- dataset files


def example_to_json(ex: QAExample, g: KnowledgeGraph) -> dict:
    rec = {
        "id": ex.id,
        "question": ex.question,
        "topics": [g.entities[t] for t in ex.topics],
        "answers": [g.entities[a] for a in ex.answers],
    }
    if ex.path is not None:
        rec["path"] = [g.relations[r] for r in ex.path]
    if ex.path_entities is not None:
        rec["path_entities"] = [g.entities[e] for e in ex.path_entities]
    return rec


def write_examples(examples: Iterable[QAExample], g: KnowledgeGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_json(ex, g), sort_keys=True) + "\n")


def read_examples(path, g: KnowledgeGraph, validate=True) -> list[QAExample]:
    """Load a JSONL dataset against graph ``g``; re-checks oracle answers when a path is present."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ex = QAExample(
                    id=str(rec["id"]),
                    question=rec["question"],
                    topics=[g.entity_id(t) for t in rec["topics"]],
                    answers=[g.entity_id(a) for a in rec["answers"]],
                    path=[g.relation_id(r) for r in rec["path"]] if rec.get("path") is not None else None,
                    path_entities=([g.entity_id(e) for e in rec["path_entities"]]
                                   if rec.get("path_entities") is not None else None),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad example record: {exc}") from None
            if validate and ex.path is not None:
                got = oracle_answer(g, ex.topics, ex.path)
                if got != set(ex.answers):
                    raise DataError(f"{path}:{lineno}: stored answers disagree with the path oracle")
            out.append(ex)
    return out


# ---------------------------------------------------------------- revision analysis


def classify_revision(trace, example_or_path, answers=None) -> str:
    """Label a trace "A" (revised an off-path intermediate), "B" (all on path) or "other".

    ``example_or_path`` is an Instance-like object with ``path_entities`` (local
    ids per hop) and ``answers``, or the local path list itself with ``answers``
    given separately.
    """
    if isinstance(example_or_path, (list, tuple)):
        path = list(example_or_path)
    else:
        path = getattr(example_or_path, "path_entities", None)
        if answers is None:
            answers = example_or_path.answers
    if not path:
        raise InvalidArgumentError("revision analysis needs a gold path")
    if not hits_at_1(trace, answers):
        return "other"
    states = trace.states
    n_inter = min(len(states) - 1, len(path)) - 1
    for k in range(1, n_inter + 1):
        if int(np.argmax(states[k].entity_distribution)) != path[k - 1]:
            return "A"
    return "B"


@dataclass
class EvalReport:
    hits_at_1: float
    f1: float
    records: list[dict]
    revision: dict[str, int]

    def summary(self) -> str:
        r = self.revision
        return (f"hits@1={self.hits_at_1:.4f} f1={self.f1:.4f} n={len(self.records)} "
                f"groupA={r.get('A', 0)} groupB={r.get('B', 0)} other={r.get('other', 0)}")


def build_report(traces, instances) -> EvalReport:
    if not instances:
        raise DataError("cannot evaluate an empty example set")
    records = []
    counts = Counter({"A": 0, "B": 0, "other": 0})
    for tr, inst in zip(traces, instances):
        gold = inst.answers
        h = hits_at_1(tr, gold)
        f = f1_score(tr.answers, gold)
        group = classify_revision(tr, inst) if inst.path_entities else None
        if group is not None:
            counts[group] += 1
        names = inst.subgraph.entities
        records.append({
            "id": inst.example.id,
            "hits1": h,
            "f1": f,
            "argmax": names[int(np.argmax(tr.final_distribution))],
            "predicted": sorted(names[e] for e in tr.answers),
            "gold": sorted(names[e] for e in gold),
            "group": group,
        })
    return EvalReport(
        hits_at_1=float(np.mean([r["hits1"] for r in records])),
        f1=float(np.mean([r["f1"] for r in records])),
        records=records,
        revision=dict(counts),
    )


def evaluate(params, instances, threshold=0.5, batch_size=64) -> EvalReport:
    """Forward every instance with ``params`` (a ModelParameters) and score it."""
    from .pipeline import make_batch, run

    tensors = params.tensors()
    traces = []
    for start in range(0, len(instances), batch_size):
        chunk = instances[start:start + batch_size]
        traces.extend(run(tensors, make_batch(chunk), params.config).split(threshold))
    return build_report(traces, instances)
