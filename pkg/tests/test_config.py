import pytest

from kbiger.config import RunConfig, build_config, format_value, parse_config_text, parse_overrides
from kbiger.errors import ConfigError, ParseError


def test_defaults():
    cfg = build_config()
    assert cfg.learning_rate == 7e-4 and cfg.batch_size == 32 and cfg.lam == 0.05
    assert cfg.hidden == 128 and cfg.steps == 3 and cfg.threshold == 0.5
    assert cfg.subgraph_hops == 3


def test_precedence_override_beats_file_beats_base(tmp_path):
    p = tmp_path / "run.conf"
    p.write_text("# comment line\nlam = 0.2   # trailing comment\nsteps=2\nuse_teacher=false\n")
    cfg = build_config(p, overrides={"steps": "4"}, base={"lam": 0.9, "hidden": 64})
    assert cfg.lam == 0.2 and cfg.steps == 4 and cfg.hidden == 64 and cfg.use_teacher is False


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as info:
        parse_config_text("lam=1\n\nnot a pair\n")
    assert info.value.line == 3
    with pytest.raises(ConfigError):
        build_config(overrides={"nonsense": "1"})
    with pytest.raises(ConfigError):
        build_config(overrides={"steps": "two"})
    with pytest.raises(ConfigError):
        parse_overrides(["lam"])


def test_validation_lists_every_problem():
    cfg = build_config(overrides={"lam": "-1", "steps": "0", "subgraph_mode": "bogus"})
    with pytest.raises(ConfigError) as info:
        cfg.validate()
    msg = str(info.value)
    assert "lam" in msg and "steps" in msg and "subgraph_mode" in msg


def test_data_dir_fills_paths_and_echo_round_trips(tmp_path):
    cfg = build_config(overrides={"data_dir": str(tmp_path), "hops": "none"})
    assert cfg.graph == str(tmp_path / "graph.tsv") and cfg.hops is None
    assert "graph" in " ".join(cfg.problems(need=("graph",)))
    text = "\n".join(cfg.to_lines())
    again = build_config(overrides=parse_config_text(text))
    assert again == cfg
    assert format_value(True) == "true" and format_value(None) == "none"


def test_train_config_projection():
    cfg = RunConfig(steps=2, lam=0.3)
    tc = cfg.train_config()
    assert tc.steps == 2 and tc.lam == 0.3 and not hasattr(tc, "data_dir")
