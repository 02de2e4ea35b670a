"""Run configuration: built-in defaults, a key=value file, then command-line overrides."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping

from .errors import ConfigError, ParseError
from .training import TrainConfig


@dataclass
class RunConfig(TrainConfig):
    data_dir: str | None = None
    graph: str | None = None
    train_data: str | None = None
    dev_data: str | None = None
    test_data: str | None = None
    subgraph_mode: str = "nhop"
    hops: int | None = None  # n-hop radius; defaults to the number of reasoning steps
    ppr_damping: float = 0.8
    max_entities: int = 2000
    mask_topics: bool = True  # replace topic-name mentions in questions by a placeholder token
    output_dir: str = "runs/latest"

    def resolved(self) -> "RunConfig":
        """Fill dataset paths from ``data_dir`` where not given explicitly."""
        cfg = RunConfig(**asdict(self))
        if cfg.data_dir:
            root = Path(cfg.data_dir)
            defaults = {"graph": "graph.tsv", "train_data": "train.jsonl",
                        "dev_data": "dev.jsonl", "test_data": "test.jsonl"}
            for key, name in defaults.items():
                if getattr(cfg, key) is None:
                    setattr(cfg, key, str(root / name))
        return cfg

    @property
    def subgraph_hops(self) -> int:
        return self.hops if self.hops is not None else self.steps

    def problems(self, need: tuple[str, ...] = ()) -> list[str]:
        out = []
        try:
            TrainConfig.validate(self)
        except ConfigError as exc:
            out.extend(str(exc).split("; "))
        if self.subgraph_mode not in ("nhop", "ppr"):
            out.append(f"subgraph_mode must be nhop or ppr, got {self.subgraph_mode!r}")
        if self.hops is not None and self.hops < 1:
            out.append("hops must be >= 1")
        if not 0.0 < self.ppr_damping < 1.0:
            out.append("ppr_damping must lie in (0, 1)")
        if self.max_entities < 1:
            out.append("max_entities must be >= 1")
        for key in need:
            value = getattr(self, key)
            if value is None:
                out.append(f"{key} is required")
            elif not Path(value).exists():
                out.append(f"{key}: no such file {value}")
        return out

    def validate(self, need: tuple[str, ...] = ()):
        """Raise one ConfigError listing every problem found."""
        problems = self.problems(need)
        if problems:
            raise ConfigError("; ".join(problems))

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{f.name: getattr(self, f.name) for f in fields(TrainConfig)})

    def to_lines(self) -> list[str]:
        return [f"{k}={format_value(v)}" for k, v in asdict(self).items()]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    text = raw.strip()
    if text.lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("bool"):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.split(' ')[0]}") from None
    return text


def parse_config_text(text: str, source: str | None = None) -> dict[str, str]:
    """key=value lines; '#' starts a comment; blank lines are ignored."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"expected key=value, got {line!r}", line=n, path=source)
        out[key.strip()] = value.strip()
    return out


def load_config_file(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(), source=str(path))


def build_config(file_path=None, overrides: Mapping[str, object] | None = None,
                 base: Mapping[str, object] | None = None) -> RunConfig:
    """Built-in defaults < ``base`` < the config file < ``overrides``."""
    values: dict[str, object] = {}
    unknown = []
    layers = [dict(base)] if base else []
    if file_path is not None:
        layers.append(load_config_file(file_path))
    if overrides:
        layers.append(dict(overrides))
    for layer in layers:
        for key, raw in layer.items():
            key = key.replace("-", "_")
            if key not in _FIELD_TYPES:
                unknown.append(key)
                continue
            values[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(set(unknown)))}")
    return RunConfig(**values).resolved()


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out
