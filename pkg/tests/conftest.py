import numpy as np
import pytest

from kbiger.kg import extract_subgraph, graph_from_triples
from kbiger.model import ModelConfig, init_params


def random_graph(rng, n_entities, n_relations, n_triples):
    triples = []
    for _ in range(n_triples):
        h, t = rng.integers(n_entities, size=2)
        r = rng.integers(n_relations)
        triples.append((f"e{h}", f"r{r}", f"e{t}"))
    # mention every entity and relation so vocabularies have the requested sizes
    for e in range(n_entities):
        triples.append((f"e{e}", f"r{e % n_relations}", f"e{(e + 1) % n_entities}"))
    return graph_from_triples(triples)


def random_subgraph(rng, max_entities=10, n_relations=3):
    n = int(rng.integers(2, max_entities + 1))
    g = random_graph(rng, n, n_relations, int(rng.integers(0, 2 * n)))
    topics = sorted({int(t) for t in rng.integers(n, size=int(rng.integers(1, 3)))})
    sg = extract_subgraph(g, topics, hops=n)
    return g, sg


def small_config(num_relations, vocab_size=12, hidden=6, word_dim=5, steps=2, **kw):
    return ModelConfig(vocab_size=vocab_size, num_relations=num_relations, word_dim=word_dim,
                       hidden=hidden, steps=steps, **kw)


def random_params(rng, num_relations, **kw):
    return init_params(small_config(num_relations, **kw), seed=int(rng.integers(1 << 30)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_task(triples, questions, hops=2):
    """(graph, vocab, instances) for hand-written ``(text, topic names, answer names)`` questions."""
    from kbiger.encoder import Vocabulary
    from kbiger.harness import QAExample
    from kbiger.pipeline import prepare_instances

    g = graph_from_triples(triples)
    examples = [QAExample(f"q{i}", text, [g.entity_id(t) for t in topics], [g.entity_id(a) for a in answers])
                for i, (text, topics, answers) in enumerate(questions)]
    vocab = Vocabulary.build(text for text, _, _ in questions)
    instances, skipped = prepare_instances(g, examples, vocab, hops=hops)
    assert skipped == 0
    return g, vocab, instances


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
