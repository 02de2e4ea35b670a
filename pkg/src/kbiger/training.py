"""Teacher pretraining, student distillation and the Adam optimization loop."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tape, Tensor
from .errors import ConfigError, InvalidArgumentError, NumericError
from .harness import evaluate
from .model import ModelConfig, ModelParameters, init_params
from .pipeline import Batch, Instance, gold_distribution, make_batch, run
from .reasoner import BatchTrace, ForwardTrace

__all__ = [
    "TrainConfig", "LossReport", "OptimizerState", "TrainResult",
    "gold_distribution", "student_loss", "batch_loss", "adam_step",
    "train_teacher", "train_student", "train_model",
]

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 7e-4
    batch_size: int = 32
    steps: int = 3
    lam: float = 0.05
    hidden: int = 128
    word_dim: int = 300
    epochs: int = 50
    seed: int = 0
    use_teacher: bool = True
    use_graph_summary: bool = True
    mlp_depth: int = 1
    clip_norm: float = 1.0
    patience: int = 10
    threshold: float = 0.5
    target_dev_hits: float | None = None  # stop once dev Hits@1 reaches this

    def validate(self):
        problems = []
        if self.lam < 0:
            problems.append("lam must be >= 0")
        if self.steps < 1:
            problems.append("steps must be >= 1")
        if self.hidden < 2 or self.hidden % 2:
            problems.append("hidden must be a positive even number")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be > 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if not 0.0 <= self.threshold < 1.0:
            problems.append("threshold must lie in [0, 1)")
        if problems:
            raise ConfigError("; ".join(problems))

    def model_config(self, vocab_size, num_relations) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, num_relations=num_relations, word_dim=self.word_dim,
                           hidden=self.hidden, steps=self.steps,
                           use_graph_summary=self.use_graph_summary, mlp_depth=self.mlp_depth)

    def to_dict(self):
        return asdict(self)


@dataclass
class LossReport:
    l1: float
    l2: float
    total: float
    per_step: list[float] = field(default_factory=list)


# ---------------------------------------------------------------- losses


def student_loss(student: ForwardTrace, teacher: ForwardTrace | None, gold, lam: float) -> LossReport:
    """L1 = KL(gold || student final); L2 = sum_k KL(teacher_k || student_k); total = L1 + lam L2.

    The target distribution weights the log ratio and the network's output is
    the clamped side. With ``teacher=None`` the loss is L1 alone.
    """
    if teacher is not None and len(student) != len(teacher):
        raise InvalidArgumentError(f"step count mismatch: {len(student) - 1} vs {len(teacher) - 1}")
    l1 = ag.kl_divergence(gold, student.final_distribution).item()
    if teacher is None:
        return LossReport(l1, 0.0, l1)
    per_step = [ag.kl_divergence(t.entity_distribution, s.entity_distribution).item()
                for s, t in zip(student.states[1:], teacher.states[1:])]
    l2 = 0.0
    for v in per_step:
        l2 += v
    return LossReport(l1, l2, l1 + lam * l2, per_step)


def batch_loss(trace: BatchTrace, gold: np.ndarray, lam: float,
               teacher_dists: Sequence[np.ndarray] | None = None):
    """Mean over questions of the student loss, as a tape tensor plus a report.

    ``teacher_dists[k - 1]`` is the teacher's flat step-k distribution; tensors
    are detached, so no adjoint ever reaches the teacher.
    """
    g = trace.graph
    B = g.num_questions
    l1_q = ag.segment_sum(ag.kl_terms(gold, trace.p[-1]), g.seg, B)
    l1 = ag.mul(ag.sum(l1_q), 1.0 / B)
    if teacher_dists is None:
        return l1, LossReport(l1.item(), 0.0, l1.item())
    if len(teacher_dists) != trace.steps:
        raise InvalidArgumentError(f"step count mismatch: {trace.steps} vs {len(teacher_dists)}")
    per_step = []
    l2 = None
    for k, t in enumerate(teacher_dists, 1):
        target = t.detach() if isinstance(t, Tensor) else Tensor(t)
        term = ag.mul(ag.sum(ag.kl_terms(target, trace.p[k])), 1.0 / B)
        per_step.append(term.item())
        l2 = term if l2 is None else ag.add(l2, term)
    total = ag.add(l1, ag.mul(l2, lam))
    return total, LossReport(l1.item(), l2.item(), total.item(), per_step)


# ---------------------------------------------------------------- optimizer


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParameters | dict) -> "OptimizerState":
        arrays = params.arrays if isinstance(params, ModelParameters) else params
        return cls({k: np.zeros_like(a) for k, a in arrays.items()},
                   {k: np.zeros_like(a) for k, a in arrays.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState, lr: float):
    """Bias-corrected Adam update, in place. Returns (params, state)."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


# ---------------------------------------------------------------- loops


@dataclass
class TrainResult:
    params: ModelParameters
    history: list[dict]
    best_epoch: int = 0


def _teacher_dists(teacher: ModelParameters, batch: Batch) -> list[np.ndarray]:
    tr = run(teacher.tensors(), batch, teacher.config)
    return [p.data for p in tr.p[1:]]


def batch_objective(params: dict[str, Tensor], batch: Batch, config: ModelConfig, lam: float,
                    teacher: ModelParameters | None = None):
    """Record one forward + loss on the active tape."""
    trace = run(params, batch, config)
    tdists = _teacher_dists(teacher, batch) if teacher is not None else None
    return batch_loss(trace, batch.gold, lam, tdists)


def train_step(model: ModelParameters, state: OptimizerState, batch: Batch, cfg: TrainConfig,
               teacher: ModelParameters | None = None) -> LossReport:
    tensors = model.tensors(requires_grad=True)
    with Tape():
        loss, report = batch_objective(tensors, batch, model.config, cfg.lam, teacher)
    if not np.isfinite(report.total):
        raise NumericError(f"non-finite loss {report.total}")
    grads = ag.gradient(loss, tensors)
    clip_by_global_norm(grads, cfg.clip_norm)
    adam_step(model.arrays, grads, state, cfg.learning_rate)
    return report


def train_model(train: Sequence[Instance], dev: Sequence[Instance], cfg: TrainConfig, vocab_size: int,
                num_relations: int, teacher: ModelParameters | None = None, seed_offset=0,
                log_fn: Callable[[str], None] | None = None, init: ModelParameters | None = None) -> TrainResult:
    """Mini-batch Adam with dev-set early stopping; returns the best-dev parameters."""
    cfg.validate()
    if not train:
        raise InvalidArgumentError("training set is empty")
    mcfg = cfg.model_config(vocab_size, num_relations)
    model = init.copy() if init is not None else init_params(mcfg, seed=cfg.seed + seed_offset)
    state = OptimizerState.zeros_like(model)
    rng = np.random.default_rng(cfg.seed + 1000 + seed_offset)
    best = model.copy()
    best_hits, best_epoch, bad = -np.inf, 0, 0
    history = []
    train = list(train)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = make_batch([train[i] for i in order[start:start + cfg.batch_size]])
            losses.append(train_step(model, state, batch, cfg, teacher).total)
        rec = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if dev:
            rep = evaluate(model, dev, cfg.threshold)
            rec.update(dev_hits1=rep.hits_at_1, dev_f1=rep.f1)
        else:
            rec.update(dev_hits1=float("nan"), dev_f1=float("nan"))
        rec["seconds"] = time.perf_counter() - t0
        history.append(rec)
        line = format_log_line(rec)
        log.info(line)
        if log_fn is not None:
            log_fn(line)
        score = rec["dev_hits1"] if dev else -rec["train_loss"]
        if score > best_hits:
            best_hits, best_epoch, bad = score, epoch, 0
            best = model.copy()
        else:
            bad += 1
        if dev and cfg.target_dev_hits is not None and rec["dev_hits1"] >= cfg.target_dev_hits:
            break
        if cfg.patience and bad >= cfg.patience:
            break
    if cfg.epochs == 0:
        best = model
    return TrainResult(best, history, best_epoch)


def format_log_line(rec: dict) -> str:
    return (f"{rec['epoch']}\t{rec['train_loss']:.6f}\t{rec['dev_hits1']:.4f}\t"
            f"{rec['dev_f1']:.4f}\t{rec['seconds']:.2f}")


def train_teacher(train, dev, cfg: TrainConfig, vocab_size, num_relations, log_fn=None) -> TrainResult:
    """Final-answer supervision only; lam plays no role."""
    return train_model(train, dev, cfg, vocab_size, num_relations, teacher=None, log_fn=log_fn)


def train_student(train, dev, teacher: ModelParameters | None, cfg: TrainConfig, vocab_size,
                  num_relations, log_fn=None) -> TrainResult:
    """Distil the teacher's per-step distributions (L1 + lam L2), or L1 alone without a teacher."""
    if cfg.use_teacher:
        if teacher is None:
            raise InvalidArgumentError("use_teacher is set but no teacher was given")
        tc = teacher.config
        if (tc.steps != cfg.steps or tc.num_relations != num_relations or tc.vocab_size != vocab_size):
            raise InvalidArgumentError("teacher config does not match the student setup")
    else:
        teacher = None
    return train_model(train, dev, cfg, vocab_size, num_relations, teacher=teacher,
                       seed_offset=1 if teacher is not None else 0, log_fn=log_fn)


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **kw)
