"""Checkpoint directories: a plain-text manifest plus a raw little-endian payload.

Layout::

    manifest.txt    key=value lines (format version, config, shape table, seed)
    params.bin      float64 little-endian values, parameters in manifest order
    vocab.txt       question vocabulary, one token per line (optional)
    relations.txt   relation names in id order (optional)
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .encoder import Vocabulary
from .errors import (CheckpointError, CheckpointVersionError, ShapeMismatchError,
                     TruncatedPayloadError)
from .model import ModelConfig, ModelParameters, init_params

FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    params: ModelParameters
    seed: int | None = None
    vocab: Vocabulary | None = None
    relations: list[str] | None = None
    extra: dict[str, str] = field(default_factory=dict)
    manifest: dict[str, str] = field(default_factory=dict)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _parse_config(entries: Mapping[str, str]) -> ModelConfig:
    kw = {}
    for f in fields(ModelConfig):
        key = f"config.{f.name}"
        if key not in entries:
            raise CheckpointError(f"manifest lacks {key}")
        raw = entries[key]
        if f.type in ("bool", bool):
            kw[f.name] = raw == "true"
        else:
            kw[f.name] = int(raw)
    return ModelConfig(**kw)


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    return init_params(config, seed=0).shapes()


def save_checkpoint(path, params: ModelParameters, seed: int | None = None,
                    vocab: Vocabulary | None = None, relations: Sequence[str] | None = None,
                    extra: Mapping[str, object] | None = None) -> Path:
    """Write ``params`` (and optional vocab/relations) into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"format_version={FORMAT_VERSION}", "dtype=float64", "byte_order=little"]
    if seed is not None:
        lines.append(f"seed={int(seed)}")
    for k, v in params.config.to_dict().items():
        lines.append(f"config.{k}={_fmt(v)}")
    names = params.names()
    lines.append(f"param_count={len(names)}")
    for i, name in enumerate(names):
        dims = ",".join(str(n) for n in params[name].shape)
        lines.append(f"param.{i}={name} {dims}")
    for k, v in (extra or {}).items():
        lines.append(f"extra.{k}={_fmt(v)}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    with open(out / "params.bin", "wb") as fh:
        for name in names:
            fh.write(np.ascontiguousarray(params[name], dtype=PAYLOAD_DTYPE).tobytes())
    if vocab is not None:
        vocab.save(out / "vocab.txt")
    if relations is not None:
        (out / "relations.txt").write_text("".join(f"{r}\n" for r in relations))
    return out


def read_manifest(path) -> dict[str, str]:
    p = Path(path) / "manifest.txt"
    if not p.exists():
        raise CheckpointError(f"no manifest at {p}")
    entries = {}
    for line in p.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed manifest line {line!r}")
        entries[key.strip()] = value.strip()
    return entries


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint directory; raises a distinct error per failure mode."""
    root = Path(path)
    m = read_manifest(root)
    version = m.get("format_version")
    if version != str(FORMAT_VERSION):
        raise CheckpointVersionError(f"checkpoint format {version!r}, this build reads {FORMAT_VERSION}")
    if m.get("dtype", "float64") != "float64":
        raise CheckpointError(f"unsupported payload dtype {m['dtype']}")
    config = _parse_config(m)
    count = int(m.get("param_count", -1))
    table = []
    for i in range(count):
        entry = m.get(f"param.{i}")
        if entry is None:
            raise CheckpointError(f"manifest lacks param.{i}")
        name, _, dims = entry.partition(" ")
        shape = tuple(int(x) for x in dims.split(",")) if dims else ()
        table.append((name, shape))
    want = expected_shapes(config)
    got = dict(table)
    if len(got) != len(table) or got != want:
        missing = sorted(set(want) - set(got))
        extra = sorted(set(got) - set(want))
        wrong = sorted(k for k in set(want) & set(got) if want[k] != got[k])
        raise ShapeMismatchError(f"shape table does not match config (missing {missing}, "
                                 f"unexpected {extra}, wrong shape {wrong})")
    payload = (root / "params.bin").read_bytes() if (root / "params.bin").exists() else b""
    need = sum(int(np.prod(s)) for _, s in table) * PAYLOAD_DTYPE.itemsize
    if len(payload) != need:
        raise TruncatedPayloadError(f"payload has {len(payload)} bytes, manifest needs {need}")
    flat = np.frombuffer(payload, dtype=PAYLOAD_DTYPE)
    arrays, pos = {}, 0
    for name, shape in table:
        n = int(np.prod(shape))
        arrays[name] = flat[pos:pos + n].astype(np.float64).reshape(shape)
        pos += n
    vocab = Vocabulary.load(root / "vocab.txt") if (root / "vocab.txt").exists() else None
    relations = None
    if (root / "relations.txt").exists():
        relations = (root / "relations.txt").read_text().splitlines()
    seed = int(m["seed"]) if "seed" in m else None
    extra = {k[len("extra."):]: v for k, v in m.items() if k.startswith("extra.")}
    return Checkpoint(ModelParameters(config, arrays), seed, vocab, relations, extra, m)
