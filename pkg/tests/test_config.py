from pathlib import Path

import pytest

from config.run_config import GridSpec, RunConfig, load_grid, load_run_config, parse_grid, parse_run_config
from shared.errors import InvalidConfigurationError
from simulator.accounting import Method

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


def _error(text: str) -> InvalidConfigurationError:
    with pytest.raises(InvalidConfigurationError) as err:
        parse_run_config(text)
    return err.value


def test_example_config_loads():
    config = load_run_config(CONFIG_DIR / "example.conf")
    assert config.run.name == "example"
    assert config.federation.method == Method.FEDKRSO
    assert config.federation.intervals * config.federation.interval_length == config.federation.local_iterations
    assert config.layer_shapes() == [(8, 16)]


def test_defaults_and_comments():
    config = parse_run_config("# only a comment\n\nfederation.rounds = 3   # trailing\n")
    assert config.federation.rounds == 3
    assert config.sketch.rank == RunConfig().sketch.rank


def test_hash_inside_value_is_not_a_comment():
    config = parse_run_config("run.name = a#b\n#federation.rounds = 9\nfederation.rounds = 2\t# two\n")
    assert config.run.name == "a#b"
    assert config.federation.rounds == 2
    assert parse_run_config(config.to_flat()).run.name == "a#b"


def test_flat_rendering_round_trips(make_config):
    config = make_config(**{"partition.max_retries": 3, "optimizer.schedule": "cosine"})
    assert parse_run_config(config.to_flat()) == config


@pytest.mark.parametrize(
    "text,field,line",
    [
        ("federation.rounds = 2\njust text\n", None, 2),
        ("rounds = 2\n", "rounds", 1),
        ("federation.rounds = 2\nmodel.width = 3\n", "model.width", 2),
        ("federation.rounds = 2\nfederation.rounds = 3\n", "federation.rounds", 2),
        ("sketch.rank =\n", "sketch.rank", 1),
        ("task.variant = quadratic\nfederation.K = 0\n", "federation.K", 2),
        ("sketch.kind = spherical\n", "sketch.kind", 1),
        ("federation.bogus = 1\n", "federation.bogus", 1),
    ],
    ids=["no-equals", "no-section", "unknown-section", "duplicate", "empty", "range", "enum", "unknown-key"],
)
def test_parse_errors_name_field_and_line(text, field, line):
    err = _error(text)
    assert err.field == field
    assert err.line == line
    assert f"line {line}" in str(err)


def test_budget_mismatch_points_at_intervals():
    err = _error("federation.local_iterations = 100\nfederation.intervals = 3\n")
    assert err.field == "federation.intervals"
    assert err.line == 2
    relaxed = parse_run_config("federation.intervals = 3\nfederation.enforce_budget = false\n")
    assert relaxed.federation.intervals == 3


@pytest.mark.parametrize(
    "updates,field",
    [
        ({"partition.mode": "dirichlet", "task.variant": "logistic"}, "partition.alpha"),
        ({"partition.mode": "dirichlet", "partition.alpha": 0.5}, "partition.mode"),
        ({"sketch.kind": "row_orthonormal_scaled", "sketch.rank": 9}, "sketch.rank"),
        ({"federation.method": "fedit", "lora.rank": 5}, "lora.rank"),
        ({"task.num_examples": 2}, "task.num_examples"),
        ({"lora.bogus": 1}, "lora.bogus"),
    ],
)
def test_cross_field_checks(make_config, updates, field):
    with pytest.raises(InvalidConfigurationError) as err:
        make_config(**updates)
    assert err.value.field == field


def test_derived_views(make_config):
    config = make_config(**{"task.variant": "mlp", "task.hidden_dim": 5, "task.output_dim": 3})
    assert config.layer_shapes() == [(5, 8), (3, 5)]
    assert config.schedule().total_steps == 3 * 2 * 5
    local = config.local_config()
    assert (local.intervals, local.interval_length, local.rank) == (2, 5, 2)
    assert config.partition_spec().seed == make_config().partition_spec().seed
    assert config.partition_spec().seed != make_config(**{"run.master_seed": 12}).partition_spec().seed


def test_missing_file_is_a_configuration_error(tmp_path):
    with pytest.raises(InvalidConfigurationError):
        load_run_config(tmp_path / "absent.conf")


# ── Grids ──────────────────────────────────────────────────────────

def test_example_grid_loads():
    grid = load_grid(CONFIG_DIR / "example_grid.conf")
    assert grid.J == [10, 20, 50, 100]
    assert grid.K == [1, 2, 4, 8, 16]
    assert grid.repeats == 5
    assert grid.axes == ["K", "J"]


def test_grid_values_are_validated():
    grid = parse_grid("grid.alpha = iid, 0.5\ngrid.method = fedkrso, fedfft\n")
    assert grid.alpha == ["iid", "0.5"]
    assert grid.method == [Method.FEDKRSO, Method.FEDFFT]
    with pytest.raises(InvalidConfigurationError) as err:
        parse_grid("grid.K = 2\ngrid.alpha = iid, lots\n")
    assert (err.value.field, err.value.line) == ("grid.alpha", 2)
    with pytest.raises(InvalidConfigurationError) as err:
        parse_grid("grid.J = 0, 10\n")
    assert err.value.field == "grid.J"
    with pytest.raises(InvalidConfigurationError):
        parse_grid("federation.K = 2\n")


def test_empty_grid_has_no_axes():
    assert GridSpec().axes == []


def test_undecodable_file_is_a_configuration_error(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_bytes(b"run.name = \xff\xfe\n")
    with pytest.raises(InvalidConfigurationError, match="UTF-8"):
        load_run_config(path)
    with pytest.raises(InvalidConfigurationError, match="UTF-8"):
        load_grid(path)
