import csv
import io
import json

import pytest

from shared.errors import InvalidConfigurationError
from simulator.accounting import CostFormat, Method, check_measured_costs, format_cost_table, memory_footprint, round_costs

SQUARE = [(768, 768)]


def test_fedkrso_costs_for_square_layer():
    report = round_costs(Method.FEDKRSO, SQUARE, 4, K=10, I=10)
    assert (report.P, report.L, report.Q) == (589_824, 6_144, 3_072)
    assert report.downlink_params == 30_730
    assert report.uplink_params == 30_720
    assert report.uplink_is_bound
    assert report.memory.total == 595_968 + 3_072 + 6_144


def test_fedfft_memory_for_square_layer():
    memory = memory_footprint("fedfft", SQUARE, 4)
    assert (memory.weight_params, memory.gradient_params, memory.optstate_params) == (589_824, 589_824, 1_179_648)


@pytest.mark.parametrize("method,expected", [(Method.FEDIT, 6_144), (Method.FFA_LORA, 3_072), (Method.FEDFFT, 589_824)])
def test_baseline_communication_is_symmetric(method, expected):
    report = round_costs(method, SQUARE, 4)
    assert report.uplink_params == report.downlink_params == expected
    assert not report.uplink_is_bound


def test_costs_sum_over_layers():
    report = round_costs(Method.FEDKRSO, [(4, 8), (3, 4)], 2, K=5, I=2)
    assert (report.P, report.L, report.Q) == (44, 38, 14)
    assert report.downlink_params == 5 * 14 + 5


def test_measured_costs_within_bound():
    report = round_costs(Method.FEDKRSO, SQUARE, 4, K=10, I=10)
    assert check_measured_costs(report, [9_216, 30_720], 30_730) == []
    problems = check_measured_costs(report, [33_792], 30_731)
    assert len(problems) == 2
    assert "client 0" in problems[0]


def test_measured_costs_must_match_exactly_for_baselines():
    report = round_costs(Method.FEDIT, SQUARE, 4)
    assert check_measured_costs(report, [6_144], 6_144) == []
    assert check_measured_costs(report, [6_000], 6_144)


def test_byte_view_scales_by_element_width():
    report = round_costs(Method.FFA_LORA, SQUARE, 4)
    assert report.to_bytes(2)["uplink_bytes"] == 6_144
    assert report.to_bytes()["weight_bytes"] == 8 * (589_824 + 6_144)


@pytest.mark.parametrize(
    "args,kwargs,field",
    [
        (("fedavg", SQUARE, 4), {}, "federation.method"),
        ((Method.FEDFFT, SQUARE, 0), {}, "r"),
        ((Method.FEDFFT, [(0, 4)], 1), {}, "dims"),
        ((Method.FEDIT, [(3, 768)], 4), {}, "lora.rank"),
        ((Method.FEDKRSO, SQUARE, 4), {"I": 2}, "federation.K"),
        ((Method.FEDKRSO, SQUARE, 4), {"K": 2}, "federation.intervals"),
    ],
)
def test_invalid_cost_queries(args, kwargs, field):
    with pytest.raises(InvalidConfigurationError) as err:
        round_costs(*args, **kwargs)
    assert err.value.field == field


def _reports():
    return [
        round_costs(Method.FEDFFT, SQUARE, 4),
        round_costs(Method.FEDKRSO, SQUARE, 4, K=10, I=10),
    ]


def test_markdown_table():
    table = format_cost_table(_reports())
    assert table.startswith("P = 589824, L = 6144, Q = 3072")
    assert "| fedkrso | <= I*Q = 30,720 | K*Q+K = 30,730 |" in table
    assert "2P = 1,179,648" in table


def test_csv_table():
    rows = list(csv.DictReader(io.StringIO(format_cost_table(_reports(), CostFormat.CSV))))
    assert [r["method"] for r in rows] == ["fedfft", "fedkrso"]
    assert rows[1]["downlink"] == "30730"
    assert rows[1]["uplink_symbolic"] == "<= I*Q"


def test_json_table():
    payload = json.loads(format_cost_table(_reports(), "json"))
    assert payload["Q"] == 3072
    assert payload["methods"][0]["opt_states"] == 1_179_648
