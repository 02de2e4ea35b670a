import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kbiger import harness as hn
from kbiger.errors import DataError, InvalidArgumentError
from kbiger.kg import graph_from_triples, save_triples
from kbiger.reasoner import ForwardTrace, ReasonerState

from .conftest import random_graph


def _trace(dists):
    z = np.zeros(1)
    return ForwardTrace([ReasonerState(k, z, np.asarray(p, float), z, z, z, z) for k, p in enumerate(dists)])


# ---------------------------------------------------------------- metrics


def test_metric_examples():
    assert hn.hits_at_1(np.array([0.6, 0.4]), {0}) == 1
    assert hn.hits_at_1(np.array([0.6, 0.4]), {1}) == 0
    assert hn.hits_at_1(np.array([0.5, 0.5]), {0}) == 1  # lowest id wins ties
    assert hn.f1_score({1, 2}, {1, 2}) == 1.0
    assert hn.f1_score({0, 1}, {1, 2}) == 0.5
    assert hn.f1_score(set(), {1}) == 0.0
    with pytest.raises(InvalidArgumentError):
        hn.f1_score({1}, set())


def _brute_f1(pred, gold):
    tp = sum(1 for x in pred if x in gold)
    if tp == 0:
        return 0.0
    p, r = tp / len(pred), tp / len(gold)
    return 2 * p * r / (p + r)


def _brute_hit(p, gold):
    best = 0
    for i in range(len(p)):
        if p[i] > p[best]:
            best = i
    return 1 if best in gold else 0


def test_metrics_match_brute_force_recount_on_1000_pairs():
    rng = np.random.default_rng(0)
    hits, f1s, want_h, want_f = [], [], [], []
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        p = rng.random(n)
        if rng.random() < 0.2:
            p[rng.integers(n)] = p.max()  # exercise ties
        gold = set(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False).tolist())
        pred = set(rng.choice(n, size=int(rng.integers(0, n + 1)), replace=False).tolist())
        hits.append(hn.hits_at_1(p, gold))
        f1s.append(hn.f1_score(pred, gold))
        want_h.append(_brute_hit(p, gold))
        want_f.append(_brute_f1(pred, gold))
    assert hits == want_h
    assert f1s == want_f
    assert np.mean(hits) == sum(want_h) / 1000


sets = st.sets(st.integers(0, 9), min_size=1, max_size=6)


@given(sets, sets)
def test_precision_recall_duality(a, b):
    # precision of (a vs b) is recall of (b vs a), so F1 is symmetric
    assert hn.f1_score(a, b) == pytest.approx(hn.f1_score(b, a), abs=1e-15)


# ---------------------------------------------------------------- oracle


def test_oracle_examples():
    g = graph_from_triples([("a", "r1", "b"), ("b", "r2", "c")])
    assert hn.oracle_answer(g, [0], []) == {0}
    assert hn.oracle_answer(g, [0], [0, 1]) == {2}
    with pytest.raises(InvalidArgumentError):
        hn.oracle_answer(g, [0], [7])


@pytest.mark.parametrize("seed", range(20))
def test_oracle_matches_triple_product_enumeration(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 12, 3, 30)
    T = g.triples()
    topics = set(rng.integers(12, size=2).tolist())
    path = rng.integers(3, size=int(rng.integers(1, 4))).tolist()
    found = set()
    for chain in itertools.product(T, repeat=len(path)):
        if chain[0].head not in topics:
            continue
        if any(t.relation != r for t, r in zip(chain, path)):
            continue
        if any(a.tail != b.head for a, b in zip(chain, chain[1:])):
            continue
        found.add(chain[-1].tail)
    assert hn.oracle_answer(g, topics, path) == found


# ---------------------------------------------------------------- generator


def test_minimum_instance():
    ds = hn.generate_synthetic_dataset(0, hn.SyntheticSpec(entities=2, relations=1, hops=1, questions=1,
                                                            distractor_branching=0))
    assert ds.graph.num_triples == 1
    (ex,) = ds.examples
    t = ds.graph.triples()[0]
    assert ex.topics == [t.head] and ex.answers == [t.tail]


def test_unsatisfiable_specs():
    for spec in (hn.SyntheticSpec(hops=0), hn.SyntheticSpec(entities=2, hops=2),
                 hn.SyntheticSpec(relations=3, distractor_branching=3),
                 hn.SyntheticSpec(hops=1, ambiguity=0.2), hn.SyntheticSpec(hops=2, entities=20, ambiguity=1.0)):
        with pytest.raises(hn.GenerationError):
            hn.generate_synthetic_dataset(0, spec)


def _write(ds, d):
    d.mkdir()
    save_triples(ds.graph, d / "graph.tsv")
    hn.write_examples(ds.examples, ds.graph, d / "qa.jsonl")
    return (d / "graph.tsv").read_bytes(), (d / "qa.jsonl").read_bytes()


def test_same_seed_gives_identical_files(tmp_path):
    spec = hn.SyntheticSpec(entities=60, relations=6, hops=2, questions=40, ambiguity=0.2)
    a = _write(hn.generate_synthetic_dataset(3, spec), tmp_path / "a")
    b = _write(hn.generate_synthetic_dataset(3, spec), tmp_path / "b")
    c = _write(hn.generate_synthetic_dataset(4, spec), tmp_path / "c")
    assert a == b and a != c


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("hops,amb", [(1, 0.0), (2, 0.0), (2, 0.15), (3, 0.1)])
def test_every_example_is_oracle_consistent(seed, hops, amb):
    spec = hn.SyntheticSpec(entities=120, relations=8, hops=hops, questions=60, ambiguity=amb)
    ds = hn.generate_synthetic_dataset(seed, spec)
    assert len(ds.examples) == 60
    for ex in ds.examples:
        assert set(ex.answers) == hn.oracle_answer(ds.graph, ex.topics, ex.path)
        assert len(ex.path) == len(ex.path_entities) == len(ex.question.split(" of ")) - 1
        assert ex.path_entities[-1] in ex.answers
        for k, e in enumerate(ex.path_entities):
            assert e in hn.hop_sets(ds.graph, ex.topics, ex.path)[k + 1]


def test_ambiguous_questions_have_a_dead_end_twin():
    spec = hn.SyntheticSpec(entities=120, relations=8, hops=2, questions=60, ambiguity=0.2)
    ds = hn.generate_synthetic_dataset(1, spec)
    amb = [ex for ex in ds.examples if " or " in ex.question]
    assert len(amb) == 12
    for ex in amb:
        first = hn.hop_sets(ds.graph, ex.topics, ex.path[:1])[1]
        assert len(first) == 2 and ex.path_entities[0] in first


# ---------------------------------------------------------------- files


def test_examples_round_trip_and_validation(tmp_path):
    ds = hn.generate_synthetic_dataset(0, hn.SyntheticSpec(entities=40, relations=5, hops=2, questions=20))
    p = tmp_path / "qa.jsonl"
    hn.write_examples(ds.examples, ds.graph, p)
    back = hn.read_examples(p, ds.graph)
    assert back == ds.examples
    rec = json.loads(p.read_text().splitlines()[0])
    rec["answers"] = [ds.graph.entities[(ds.graph.entity_id(rec["answers"][0]) + 1) % 40]]
    p.write_text(json.dumps(rec) + "\n")
    with pytest.raises(DataError):
        hn.read_examples(p, ds.graph)
    assert len(hn.read_examples(p, ds.graph, validate=False)) == 1
    p.write_text('{"id": "x", "question": "q", "topics": ["nope"], "answers": []}\n')
    with pytest.raises(DataError):
        hn.read_examples(p, ds.graph)


# ---------------------------------------------------------------- revision analysis


def test_classify_revision_examples():
    path = [1, 2]
    assert hn.classify_revision(_trace([[1, 0, 0], [0, 1, 0], [0, 0, 1]]), path, {2}) == "B"
    assert hn.classify_revision(_trace([[1, 0, 0], [0.1, 0.1, 0.8], [0, 0.3, 0.7]]), path, {2}) == "A"
    assert hn.classify_revision(_trace([[1, 0, 0], [0, 1, 0], [0, 0.9, 0.1]]), path, {2}) == "other"
    with pytest.raises(InvalidArgumentError):
        hn.classify_revision(_trace([[1.0], [1.0]]), [], {0})


def test_revision_groups_partition():
    rng = np.random.default_rng(5)
    labels = []
    for _ in range(300):
        n = 5
        tr = _trace([rng.dirichlet(np.ones(n)) for _ in range(3)])
        labels.append(hn.classify_revision(tr, rng.integers(n, size=2).tolist(), {int(rng.integers(n))}))
    assert set(labels) <= {"A", "B", "other"}
    c = {k: labels.count(k) for k in ("A", "B", "other")}
    assert sum(c.values()) == 300 and min(c.values()) > 0


def test_report_ceiling_and_empty_guard():
    from kbiger.pipeline import prepare_instances
    from kbiger.encoder import Vocabulary
    ds = hn.generate_synthetic_dataset(0, hn.SyntheticSpec(entities=40, relations=5, hops=2, questions=20))
    vocab = Vocabulary.build(ex.question for ex in ds.examples)
    inst, _ = prepare_instances(ds.graph, ds.examples, vocab, hops=2)
    traces = []
    for x in inst:
        dists = [np.eye(x.subgraph.num_entities)[x.path_entities[k - 1] if k else int(x.subgraph.topics[0])]
                 for k in range(3)]
        tr = _trace(dists)
        tr.answers = set(x.answers)
        traces.append(tr)
    rep = hn.build_report(traces, inst)
    assert rep.hits_at_1 == 1.0 and rep.f1 == 1.0
    assert rep.revision == {"A": 0, "B": len(inst), "other": 0}
    with pytest.raises(DataError):
        hn.build_report([], [])
