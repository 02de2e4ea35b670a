import numpy as np

from kbiger.harness import QAExample
from kbiger.kg import graph_from_triples
from kbiger.pipeline import TOPIC_TOKEN, build_vocabulary, make_batch, prepare_instances, question_tokens


def _graph():
    return graph_from_triples([("London Tipton", "played_by", "Brenda Song"), ("E12", "r1", "E3")])


def test_topic_mentions_are_masked():
    g = _graph()
    lt = g.entity_id("London Tipton")
    assert question_tokens(g, "Who plays London Tipton?", [lt]) == ["who", "plays", TOPIC_TOKEN]
    assert question_tokens(g, "Who plays London Tipton?", [lt], mask_topics=False)[-1] == "tipton"
    # only topic names are masked, and only as whole-name runs
    assert question_tokens(g, "who r1 of e12", [lt]) == ["who", "r1", "of", "e12"]
    assert question_tokens(g, "london r1 of e12", [lt, g.entity_id("E12")]) == ["london", "r1", "of", TOPIC_TOKEN]


def test_vocabulary_holds_placeholder_and_names():
    g = _graph()
    ex = QAExample("q", "who r1 of E12", [g.entity_id("E12")], [g.entity_id("E3")])
    v = build_vocabulary(g, [ex])
    assert TOPIC_TOKEN in v and "who" in v and "played_by" in v and "tipton" in v
    inst, skipped = prepare_instances(g, [ex], v, hops=1)
    assert skipped == 0
    assert inst[0].tokens == ["who", "r1", "of", TOPIC_TOKEN]
    assert inst[0].token_ids.tolist() == v.ids(inst[0].tokens).tolist()


def test_unanswerable_examples_are_counted():
    g = _graph()
    ex = QAExample("q", "who r1 of E12", [g.entity_id("E12")], [g.entity_id("Brenda Song")])
    inst, skipped = prepare_instances(g, [ex], build_vocabulary(g, [ex]), hops=2)
    assert inst == [] and skipped == 1


def test_batch_layout():
    g = _graph()
    exs = [QAExample("a", "who r1 of E12", [g.entity_id("E12")], [g.entity_id("E3")]),
           QAExample("b", "who played_by London Tipton", [g.entity_id("London Tipton")],
                     [g.entity_id("Brenda Song")])]
    inst, _ = prepare_instances(g, exs, build_vocabulary(g, exs), hops=1)
    b = make_batch(inst)
    assert b.token_ids.shape == (2, 4) and b.lengths.tolist() == [4, 3]
    assert b.token_ids[1, 3] == 0
    assert b.graph.num_entities == sum(x.subgraph.num_entities for x in inst)
    np.testing.assert_array_equal(b.gold, np.concatenate([x.gold for x in inst]))
