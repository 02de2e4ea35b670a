"""Named parameter container shared by the encoder and the reasoner."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autograd import Tensor
from .encoder import init_encoder_params
from .errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    num_relations: int  # including inverse relations
    word_dim: int = 300
    hidden: int = 128
    steps: int = 3
    use_graph_summary: bool = True
    mlp_depth: int = 1

    def validate(self):
        if self.hidden < 2 or self.hidden % 2:
            raise ConfigError(f"hidden size must be a positive even number, got {self.hidden}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.mlp_depth < 1:
            raise ConfigError("mlp_depth must be >= 1")
        if self.vocab_size < 2 or self.num_relations < 1 or self.word_dim < 1:
            raise ConfigError("vocab_size, num_relations and word_dim must be positive")

    def to_dict(self):
        return asdict(self)


def _glorot(rng, out_dim, in_dim):
    bound = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


class ModelParameters:
    """Ordered name -> array mapping plus the config that fixes every shape.

    Weight matrices are stored (out, in) and applied as ``W x``.
    """

    def __init__(self, config: ModelConfig, arrays: dict[str, np.ndarray]):
        self.config = config
        self.arrays = dict(arrays)

    def __getitem__(self, name):
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def names(self):
        return list(self.arrays)

    def shapes(self):
        return {k: v.shape for k, v in self.arrays.items()}

    def tensors(self, requires_grad=False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in self.arrays.items()}

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def num_values(self):
        return int(sum(v.size for v in self.arrays.values()))


def init_params(config: ModelConfig, seed=0, word_vectors=None) -> ModelParameters:
    """Random initialization. ``word_vectors`` optionally replaces the embedding table."""
    config.validate()
    rng = np.random.default_rng(seed)
    d = config.hidden
    arrays: dict[str, np.ndarray] = {}
    # unit-scale embeddings keep instruction-relation products away from the flat
    # region of the matching sigmoid at initialization
    table = rng.uniform(-1.0, 1.0, size=(config.vocab_size, config.word_dim))
    table[0] = 0.0
    if word_vectors is not None:
        table = np.array(word_vectors, dtype=np.float64)
        if table.shape != (config.vocab_size, config.word_dim):
            raise ConfigError(f"word vectors shape {table.shape} does not match config")
    arrays["word_emb"] = table
    arrays.update(init_encoder_params(config.word_dim, d, rng))
    arrays["rel_emb"] = rng.uniform(-1.0, 1.0, size=(config.num_relations, d))
    arrays["W_E_init"] = _glorot(rng, d, d)
    width = 3 * d if config.use_graph_summary else 2 * d
    for k in range(1, config.steps + 1):
        arrays[f"instr_W.{k}"] = _glorot(rng, d, width)
        arrays[f"instr_b.{k}"] = np.zeros(d)
    arrays["W_alpha"] = _glorot(rng, d, d)
    arrays["W_gate"] = _glorot(rng, d, d)
    arrays["b_q"] = np.zeros(d)
    arrays["W_R"] = _glorot(rng, d, d)
    for layer in range(config.mlp_depth):
        arrays[f"update_W.{layer}"] = _glorot(rng, d, 2 * d if layer == 0 else d)
        arrays[f"update_b.{layer}"] = np.zeros(d)
    arrays["w_score"] = rng.uniform(-np.sqrt(3.0 / d), np.sqrt(3.0 / d), size=d)
    return ModelParameters(config, arrays)
