"""Question tokenization, vocabulary, word vectors and the BiLSTM encoder."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigError, InvalidArgumentError, ParseError

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"

_PUNCT = re.compile(r"[.,?!'\"]")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop the characters . , ? ! ' " and split on whitespace."""
    tokens = _PUNCT.sub("", text.lower()).split()
    if not tokens:
        raise InvalidArgumentError(f"no tokens in {text!r}")
    return tokens


class Vocabulary:
    """Token <-> id map with padding at 0 and unknown at 1."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.tokens = [PAD_TOKEN, UNK_TOKEN]
        self.index = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.index.get(t, UNK) for t in tokens], dtype=np.int64)

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocabulary":
        vocab = cls()
        for text in texts:
            for tok in tokenize(text):
                vocab.add(tok)
        return vocab

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for t in self.tokens[2:]:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls(line.rstrip("\n") for line in fh if line.rstrip("\n"))


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    vectors: np.ndarray  # (len(vocab), dim)

    @property
    def dim(self):
        return self.vectors.shape[1]


def load_word_vectors(path) -> tuple[list[str], np.ndarray]:
    """Read ``token v1 v2 ...`` lines (single-space separated)."""
    tokens, rows = [], []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            try:
                vec = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            if dim is None:
                dim = len(vec)
            if not vec or len(vec) != dim:
                raise ParseError(f"expected {dim} values", line=lineno, path=path)
            tokens.append(parts[0])
            rows.append(vec)
    return tokens, np.array(rows, dtype=np.float64).reshape(len(rows), dim or 0)


def init_embedding_table(vocab: Vocabulary, dim: int, rng: np.random.Generator,
                         vectors_path=None) -> np.ndarray:
    """Uniform(-1, 1) rows, overwritten by any vectors found in ``vectors_path``."""
    table = rng.uniform(-1.0, 1.0, size=(len(vocab), dim))
    table[PAD] = 0.0
    if vectors_path is not None:
        tokens, vecs = load_word_vectors(vectors_path)
        if vecs.shape[1] != dim:
            raise ConfigError(f"vectors file has dim {vecs.shape[1]}, config expects {dim}")
        for tok, vec in zip(tokens, vecs):
            if tok in vocab:
                table[vocab.index[tok]] = vec
    return table


def embed_tokens(tokens: Sequence[str], table: EmbeddingTable) -> np.ndarray:
    """Rows of the table for each token; unknown tokens map to the <unk> row."""
    return table.vectors[table.vocab.ids(tokens)]


@dataclass
class EncodedQuestion:
    token_vectors: Tensor  # (l, d)
    question_vector: Tensor  # (d,)

    @property
    def token_count(self):
        return self.token_vectors.shape[0]


def init_encoder_params(word_dim: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    if hidden % 2:
        raise ConfigError(f"hidden size must be even for a bidirectional encoder, got {hidden}")
    h = hidden // 2
    out = {}
    for direction in ("fw", "bw"):
        bx = np.sqrt(6.0 / (word_dim + 4 * h))
        bh = np.sqrt(6.0 / (5 * h))
        out[f"enc_{direction}_Wx"] = rng.uniform(-bx, bx, size=(4 * h, word_dim))
        out[f"enc_{direction}_Wh"] = rng.uniform(-bh, bh, size=(4 * h, h))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0  # forget gate
        out[f"enc_{direction}_b"] = b
    return out


def _lstm_cell(xw_t, h, c, Wh, n):
    gates = ag.add(xw_t, ag.affine(h, Wh))
    i = ag.sigmoid(gates[:, :n])
    f = ag.sigmoid(gates[:, n:2 * n])
    g = ag.tanh(gates[:, 2 * n:3 * n])
    o = ag.sigmoid(gates[:, 3 * n:])
    c = ag.add(ag.mul(f, c), ag.mul(i, g))
    h = ag.mul(o, ag.tanh(c))
    return h, c


def encode_batch(X, lengths, params: Mapping[str, Tensor]):
    """Run the BiLSTM over padded inputs.

    X is (B, L, word_dim); ``lengths`` gives the real token count per row.
    Returns (H, q): H is (B, L, d) with H[b, j] = [forward_j; backward_j] and
    q[b] = H[b, lengths[b] - 1]. Positions past a row's length hold padding
    garbage and must be masked by the caller.
    """
    X = ag.as_tensor(X)
    lengths = np.asarray(lengths, dtype=np.int64)
    B, L, _ = X.shape
    if np.any(lengths < 1) or np.any(lengths > L):
        raise InvalidArgumentError("every question needs at least one token")
    n = params["enc_fw_Wh"].shape[1]
    mask = (np.arange(L)[None, :] < lengths[:, None]).astype(np.float64)

    states = {}
    for direction in ("fw", "bw"):
        xw = ag.affine(X, params[f"enc_{direction}_Wx"], params[f"enc_{direction}_b"])
        Wh = params[f"enc_{direction}_Wh"]
        h = Tensor(np.zeros((B, n)))
        c = Tensor(np.zeros((B, n)))
        out = [None] * L
        steps = range(L) if direction == "fw" else range(L - 1, -1, -1)
        for t in steps:
            h_new, c_new = _lstm_cell(xw[:, t, :], h, c, Wh, n)
            if direction == "bw" and not mask[:, t].all():
                # keep the zero state until the row's last real token is reached
                m = Tensor(mask[:, t:t + 1])
                keep = Tensor(1.0 - mask[:, t:t + 1])
                h_new = ag.add(ag.mul(m, h_new), ag.mul(keep, h))
                c_new = ag.add(ag.mul(m, c_new), ag.mul(keep, c))
            h, c = h_new, c_new
            out[t] = h
        states[direction] = ag.stack(out, axis=1)
    H = ag.concatenate([states["fw"], states["bw"]], axis=-1)
    q = H[np.arange(B), lengths - 1]
    return H, q


def encode(token_vectors, params: Mapping[str, Tensor]) -> EncodedQuestion:
    """Encode one question given its (l, word_dim) token vectors."""
    X = ag.as_tensor(token_vectors)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidArgumentError("encode needs a non-empty (l, word_dim) sequence")
    H, q = encode_batch(ag.reshape(X, (1,) + X.shape), [X.shape[0]], params)
    return EncodedQuestion(H[0], q[0])
