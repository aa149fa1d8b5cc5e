import pytest

from plumeseek.config import RunConfig, parse_config, parse_override
from plumeseek.errors import UsageError


@pytest.fixture(autouse=True)
def no_worker_env(monkeypatch):
    monkeypatch.delenv("PLUMESEEK_WORKERS", raising=False)


def write(tmp_path, text):
    p = tmp_path / "run.yaml"
    p.write_text(text)
    return p


def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, ""))
    assert cfg == RunConfig()
    assert cfg.filter.particle_count == 2000 and cfg.scenario.max_steps == 150
    assert cfg.experiment.n_scenarios == 100 and len(cfg.scenario.fields) == 7


def test_file_values_and_override_precedence(tmp_path):
    p = write(tmp_path, "master_seed: 3\nfilter:\n  particle_count: 500\n  zeta: 0.4\n")
    cfg = parse_config(p)
    assert cfg.master_seed == 3 and cfg.filter.particle_count == 500 and cfg.filter.zeta == 0.4
    cfg = parse_config(p, {"master_seed": 9, "filter.particle_count": 250})
    assert cfg.master_seed == 9 and cfg.filter.particle_count == 250 and cfg.filter.zeta == 0.4


def test_unknown_key_names_its_path(tmp_path):
    with pytest.raises(UsageError, match="filter.particel_count"):
        parse_config(write(tmp_path, "filter:\n  particel_count: 10\n"))
    with pytest.raises(UsageError, match="'bogus'"):
        parse_config(None, {"bogus": 1})


def test_type_errors(tmp_path):
    with pytest.raises(UsageError, match="filter.particle_count"):
        parse_config(write(tmp_path, "filter:\n  particle_count: many\n"))
    with pytest.raises(UsageError, match="filter"):
        parse_config(write(tmp_path, "filter: 3\n"))
    with pytest.raises(UsageError):
        parse_config(None, {"filter.particle_count": 0})
    with pytest.raises(UsageError, match="unknown method"):
        parse_config(None, {"experiment.methods": ["att-pfp", "magic"]})
    with pytest.raises(UsageError, match="unknown field"):
        parse_config(None, {"scenario.fields": ["lava"]})


def test_missing_and_malformed_file(tmp_path):
    with pytest.raises(UsageError, match="not found"):
        parse_config(tmp_path / "nope.yaml")
    with pytest.raises(UsageError, match="YAML"):
        parse_config(write(tmp_path, "filter: [unclosed\n"))


def test_worker_env_overrides(monkeypatch, tmp_path):
    p = write(tmp_path, "worker_count: 2\n")
    monkeypatch.setenv("PLUMESEEK_WORKERS", "4")
    assert parse_config(p, {"worker_count": 3}).worker_count == 4
    monkeypatch.setenv("PLUMESEEK_WORKERS", "x")
    with pytest.raises(UsageError):
        parse_config(p)


def test_parse_override():
    assert parse_override("filter.zeta=0.25") == ("filter.zeta", 0.25)
    assert parse_override("scenario.fields=[gas, heat]") == ("scenario.fields", ["gas", "heat"])
    assert parse_override("filter.attention=false") == ("filter.attention", False)
    with pytest.raises(UsageError):
        parse_override("filter.zeta")


def test_digest_ignores_output_and_workers():
    a = parse_config(None, {"output_dir": "x", "worker_count": 1})
    b = parse_config(None, {"output_dir": "y", "worker_count": 4})
    c = parse_config(None, {"master_seed": 1})
    assert a.digest() == b.digest() != c.digest()


def test_sections_build_domain_configs():
    cfg = parse_config(None, {"filter.particle_count": 300, "planner.kappa": 2.0, "training.episodes": 7})
    assert cfg.filter.build().particle_count == 300
    assert cfg.planner.build().kappa == 2.0
    assert cfg.training.schedule().episodes == 7
