"""Command-line entry points: gen-data, train, eval, infer, inspect-trace.

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import difflib
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, build_config, format_value, parse_overrides
from .errors import CheckpointError, ConfigError, DataError, KBIGERError, NumericError
from .harness import (QAExample, SyntheticSpec, evaluate, generate_synthetic_dataset, read_examples,
                      write_examples)
from .kg import KnowledgeGraph, extract_subgraph, load_triples, save_triples
from .pipeline import Instance, build_vocabulary, make_batch, prepare_instances, question_tokens, run
from .reasoner import write_trace
from .training import train_student, train_teacher

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
LOG_HEADER = "epoch\ttrain_loss\tdev_hits1\tdev_f1\tseconds"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def split_of(example_id: str) -> str:
    """80/10/10 split keyed on a stable hash of the example id."""
    bucket = int(hashlib.sha256(example_id.encode("utf-8")).hexdigest(), 16) % 10
    return "train" if bucket < 8 else ("dev" if bucket == 8 else "test")


def _write_config(cfg: RunConfig, path: Path):
    path.write_text("".join(f"{line}\n" for line in cfg.to_lines()))


# ---------------------------------------------------------------- gen-data


def cmd_gen_data(args) -> int:
    spec = SyntheticSpec(entities=args.entities, relations=args.relations, hops=args.hops,
                         questions=args.questions, distractor_branching=args.branching,
                         ambiguity=args.ambiguity)
    ds = generate_synthetic_dataset(args.seed, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_triples(ds.graph, out / "graph.tsv")
    splits = {"train": [], "dev": [], "test": []}
    for ex in ds.examples:
        splits[split_of(ex.id)].append(ex)
    for name, exs in splits.items():
        write_examples(exs, ds.graph, out / f"{name}.jsonl")
    lines = [f"seed={args.seed}"] + [f"{k}={format_value(v)}" for k, v in vars(spec).items()]
    (out / "generation.txt").write_text("".join(f"{x}\n" for x in lines))
    print(f"wrote {len(ds.examples)} questions ({', '.join(f'{k} {len(v)}' for k, v in splits.items())}) "
          f"over {ds.graph.num_entities} entities / {ds.graph.num_triples} triples to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- train


def _instances(cfg: RunConfig, graph, examples, vocab, label):
    insts, skipped = prepare_instances(graph, examples, vocab, mode=cfg.subgraph_mode,
                                       hops=cfg.subgraph_hops, damping=cfg.ppr_damping,
                                       max_entities=cfg.max_entities, mask_topics=cfg.mask_topics)
    if skipped:
        print(f"{label}: skipped {skipped} unanswerable examples", file=sys.stderr)
    return insts


def cmd_train(args) -> int:
    cfg = build_config(args.config, _overrides(args, output_dir=args.out))
    cfg.validate(need=("graph", "train_data", "dev_data"))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, out / "config.txt")

    graph = load_triples(cfg.graph)
    train_ex = read_examples(cfg.train_data, graph)
    dev_ex = read_examples(cfg.dev_data, graph)
    if not train_ex:
        raise DataError(f"{cfg.train_data}: no training examples")
    vocab = build_vocabulary(graph, train_ex, cfg.mask_topics)
    train = _instances(cfg, graph, train_ex, vocab, "train")
    dev = _instances(cfg, graph, dev_ex, vocab, "dev")
    tcfg = cfg.train_config()
    num_rel = 2 * graph.num_relations
    echo = {k: v for k, v in (line.split("=", 1) for line in cfg.to_lines())}

    log_path = out / "train.log"
    with open(log_path, "w", encoding="utf-8") as log_fh:
        log_fh.write("# " + " ".join(cfg.to_lines()) + "\n")

        def logger(tag):
            def emit(line):
                log_fh.write(f"{tag}\t{line}\n")
                log_fh.flush()
                if not args.quiet:
                    print(f"[{tag}] {line}")
            return emit

        log_fh.write(f"phase\t{LOG_HEADER}\n")
        teacher = None
        if tcfg.use_teacher:
            res_t = train_teacher(train, dev, tcfg, len(vocab), num_rel, log_fn=logger("teacher"))
            teacher = res_t.params
            save_checkpoint(out / "teacher", teacher, seed=tcfg.seed, vocab=vocab,
                            relations=graph.relations, extra=echo | {"role": "teacher"})
        res_s = train_student(train, dev, teacher, tcfg, len(vocab), num_rel, log_fn=logger("student"))
        save_checkpoint(out / "student", res_s.params, seed=tcfg.seed, vocab=vocab,
                        relations=graph.relations, extra=echo | {"role": "student"})
    best = res_s.history[res_s.best_epoch - 1] if res_s.best_epoch else None
    if best is not None:
        print(f"student best epoch {res_s.best_epoch}: dev hits@1={best['dev_hits1']:.4f} "
              f"f1={best['dev_f1']:.4f}")
    print(f"checkpoints and log in {out}")
    return EXIT_OK


# ---------------------------------------------------------------- eval


def _check_entity_space(ckpt, graph: KnowledgeGraph):
    if ckpt.relations is not None and list(ckpt.relations) != list(graph.relations):
        raise DataError("checkpoint relation vocabulary does not match the graph "
                        f"({len(ckpt.relations)} vs {graph.num_relations} relations)")
    if ckpt.params.config.num_relations != 2 * graph.num_relations:
        raise DataError(f"checkpoint expects {ckpt.params.config.num_relations} relation ids, "
                        f"graph yields {2 * graph.num_relations}")


def _load_for_inference(args):
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.vocab is None:
        raise CheckpointError(f"{args.checkpoint}: checkpoint has no vocabulary")
    base = {k: v for k, v in ckpt.extra.items() if k in ("subgraph_mode", "hops", "ppr_damping",
                                                         "max_entities", "threshold", "graph",
                                                         "mask_topics")}
    cfg = build_config(args.config, _overrides(args), base=base)
    cfg.steps = ckpt.params.config.steps
    return ckpt, cfg


def cmd_eval(args) -> int:
    ckpt, cfg = _load_for_inference(args)
    graph_path = args.graph or cfg.graph
    if graph_path is None:
        raise ConfigError("eval needs --graph (or a checkpoint that records one)")
    cfg.validate()
    graph = load_triples(graph_path)
    _check_entity_space(ckpt, graph)
    examples = read_examples(args.data, graph)
    if not examples:
        raise DataError(f"{args.data}: no examples to evaluate")
    insts = _instances(cfg, graph, examples, ckpt.vocab, "eval")
    report = evaluate(ckpt.params, insts, threshold=cfg.threshold)
    print(report.summary())
    if args.out:
        payload = {"config": dict(line.split("=", 1) for line in cfg.to_lines()),
                   "checkpoint": str(args.checkpoint), "data": str(args.data),
                   "hits_at_1": report.hits_at_1, "f1": report.f1, "revision": report.revision,
                   "skipped": len(examples) - len(insts), "records": report.records}
        Path(args.out).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- infer


def resolve_topics(graph: KnowledgeGraph, names) -> list[int]:
    ids = []
    for name in names:
        if name in graph.entity_index:
            ids.append(graph.entity_index[name])
            continue
        near = difflib.get_close_matches(name, graph.entities, n=5, cutoff=0.0)
        raise DataError(f"unknown topic entity {name!r}; nearest: {', '.join(near)}")
    return ids


def cmd_infer(args) -> int:
    ckpt, cfg = _load_for_inference(args)
    graph_path = args.graph or cfg.graph
    if graph_path is None:
        raise ConfigError("infer needs --graph (or a checkpoint that records one)")
    cfg.validate()
    graph = load_triples(graph_path)
    _check_entity_space(ckpt, graph)
    topics = resolve_topics(graph, [t.strip() for t in args.topics.split(",") if t.strip()])
    if not topics:
        raise ConfigError("--topics is empty")
    sg = extract_subgraph(graph, topics, mode=cfg.subgraph_mode, hops=cfg.subgraph_hops,
                          damping=cfg.ppr_damping, max_entities=cfg.max_entities)
    tokens = question_tokens(graph, args.question, topics, cfg.mask_topics)
    ex = QAExample(id="infer", question=args.question, topics=topics, answers=[])
    inst = Instance(ex, tokens, ckpt.vocab.ids(tokens), sg, np.zeros(sg.num_entities))
    trace = run(ckpt.params.tensors(), make_batch([inst]), ckpt.params.config).split(cfg.threshold)[0]
    trace.tokens = tokens
    p = trace.final_distribution
    for e in sorted(trace.answers, key=lambda e: (-p[e], e)):
        print(f"{sg.entities[e]}\t{p[e]:.6f}")
    if args.trace:
        write_trace(trace, args.trace)
    return EXIT_OK


# ---------------------------------------------------------------- inspect-trace


def cmd_inspect_trace(args) -> int:
    path = Path(args.trace)
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{n}: not a trace record ({exc.msg})") from None
    if not rows:
        raise DataError(f"{path}: empty trace")
    for rec in rows:
        print(f"step {rec['step']}")
        tokens = rec.get("tokens")
        att = rec.get("token_attention", [])
        if tokens and len(tokens) == len(att):
            print("  tokens: " + " ".join(f"{t}:{a:.3f}" for t, a in zip(tokens, att)))
        else:
            print("  token attention: " + " ".join(f"{a:.3f}" for a in att))
        ents = rec.get("top_entities", [])[:args.top]
        print("  top entities: " + ", ".join(f"{e} {p:.4f}" for e, p in ents))
        ea = rec.get("entity_attention", [])[:args.top]
        print("  graph attention: " + ", ".join(f"{e} {w:.4f}" for e, w in ea))
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def _overrides(args, **extra):
    over = parse_overrides(getattr(args, "set", None))
    for key in ("data_dir", "subgraph_mode", "threshold", "seed", "epochs"):
        value = getattr(args, key, None)
        if value is not None:
            over.setdefault(key, value)
    for key, value in extra.items():
        if value is not None:
            over.setdefault(key, value)
    return over


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kbiger", description="Multi-hop question answering over knowledge graphs.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic graph and train/dev/test splits")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--entities", type=int, default=300)
    g.add_argument("--relations", type=int, default=10)
    g.add_argument("--hops", type=int, default=2)
    g.add_argument("--questions", type=int, default=500)
    g.add_argument("--branching", type=int, default=3)
    g.add_argument("--ambiguity", type=float, default=0.0)
    g.set_defaults(func=cmd_gen_data)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--subgraph-mode", dest="subgraph_mode", choices=("nhop", "ppr"))
        sp.add_argument("--threshold", type=float)

    t = sub.add_parser("train", help="train the teacher, then the student")
    common(t)
    t.add_argument("--data", dest="data_dir", help="directory written by gen-data")
    t.add_argument("--out", help="output directory")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset file")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="JSON Lines dataset")
    e.add_argument("--graph")
    e.add_argument("--out", help="write the report as JSON here")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="answer one question")
    common(i)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--graph")
    i.add_argument("--question", required=True)
    i.add_argument("--topics", required=True, help="comma-separated topic entity names")
    i.add_argument("--trace", help="write the per-step trace (JSON Lines) here")
    i.set_defaults(func=cmd_infer)

    s = sub.add_parser("inspect-trace", help="pretty-print a trace file")
    s.add_argument("trace")
    s.add_argument("--top", type=int, default=5)
    s.set_defaults(func=cmd_inspect_trace)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KBIGERError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
