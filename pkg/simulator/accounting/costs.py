"""Closed-form per-round communication and memory costs.

P = d_m·d_n, L = (d_m + d_n)·r and Q = d_m·r, each summed over layers.
"""

import csv
import io
import json
from typing import Optional, Sequence

from shared.errors import InvalidConfigurationError
from simulator.accounting.models import SYMBOLIC_ROWS, CostFormat, CostReport, MemoryFootprint, Method


def _method(method: Method | str) -> Method:
    try:
        return Method(method)
    except ValueError:
        raise InvalidConfigurationError(f"unknown method {method!r}", field="federation.method") from None


def _check_dims(method: Method, dims: Sequence[tuple[int, int]], r: int) -> list[tuple[int, int]]:
    dims = [(int(d_m), int(d_n)) for d_m, d_n in dims]
    if not dims:
        raise InvalidConfigurationError("at least one layer is required", field="dims")
    for d_m, d_n in dims:
        if d_m < 1 or d_n < 1:
            raise InvalidConfigurationError(f"layer dims must be positive, got ({d_m}, {d_n})", field="dims")
    if r < 1:
        raise InvalidConfigurationError(f"r must be >= 1, got {r}", field="r")
    if method in (Method.FEDIT, Method.FFA_LORA):
        limit = min(min(d) for d in dims)
        if r > limit:
            raise InvalidConfigurationError(f"LoRA rank {r} exceeds the smallest layer dim {limit}", field="lora.rank")
    return dims


def _pql(dims: list[tuple[int, int]], r: int) -> tuple[int, int, int]:
    P = sum(d_m * d_n for d_m, d_n in dims)
    L = sum((d_m + d_n) * r for d_m, d_n in dims)
    Q = sum(d_m * r for d_m, _ in dims)
    return P, L, Q


def memory_footprint(method: Method | str, dims: Sequence[tuple[int, int]], r: int) -> MemoryFootprint:
    """Weights, gradients and optimizer states held by one client."""
    method = _method(method)
    P, L, Q = _pql(_check_dims(method, dims, r), r)
    weights, gradients, states = {
        Method.FEDFFT: (P, P, 2 * P),
        Method.FEDIT: (P + L, L, 2 * L),
        Method.FFA_LORA: (P + L, Q, 2 * Q),
        Method.FEDKRSO: (P + L, Q, 2 * Q),
    }[method]
    return MemoryFootprint(method=method, weight_params=weights, gradient_params=gradients, optstate_params=states)


def round_costs(
    method: Method | str,
    dims: Sequence[tuple[int, int]],
    r: int,
    K: Optional[int] = None,
    I: Optional[int] = None,
) -> CostReport:
    """Fill a CostReport from the closed-form row of the method."""
    method = _method(method)
    dims = _check_dims(method, dims, r)
    P, L, Q = _pql(dims, r)

    if method == Method.FEDKRSO:
        if K is None or K < 1:
            raise InvalidConfigurationError(f"fedkrso needs K >= 1, got {K}", field="federation.K")
        if I is None or I < 1:
            raise InvalidConfigurationError(f"fedkrso needs I >= 1, got {I}", field="federation.intervals")
        up, down = I * Q, K * Q + K
    else:
        up = down = {Method.FEDFFT: P, Method.FEDIT: L, Method.FFA_LORA: Q}[method]

    memory = memory_footprint(method, dims, r)
    return CostReport(
        method=method,
        layer_dims=dims,
        r=r,
        K=K if method == Method.FEDKRSO else None,
        I=I if method == Method.FEDKRSO else None,
        P=P,
        L=L,
        Q=Q,
        uplink_params=up,
        downlink_params=down,
        uplink_is_bound=method == Method.FEDKRSO,
        weight_params=memory.weight_params,
        gradient_params=memory.gradient_params,
        optstate_params=memory.optstate_params,
    )


def check_measured_costs(report: CostReport, uplinks: Sequence[int], downlink: int) -> list[str]:
    """Compare measured per-client counts of one round with the closed form.

    Returns the list of violations; empty means conformant.
    """
    problems = []
    for client, up in enumerate(uplinks):
        if report.uplink_is_bound and up > report.uplink_params:
            problems.append(f"client {client}: uplink {up} exceeds bound {report.uplink_params}")
        elif not report.uplink_is_bound and up != report.uplink_params:
            problems.append(f"client {client}: uplink {up} != {report.uplink_params}")
    if downlink != report.downlink_params:
        problems.append(f"downlink {downlink} != {report.downlink_params}")
    return problems


# ── Tables ─────────────────────────────────────────────────────────

_COLUMNS = ["method", "uplink", "downlink", "weights", "gradients", "opt_states"]


def _rows(reports: Sequence[CostReport]) -> list[dict]:
    rows = []
    for rep in reports:
        sym = SYMBOLIC_ROWS[rep.method]
        values = [rep.uplink_params, rep.downlink_params, rep.weight_params, rep.gradient_params, rep.optstate_params]
        row = {"method": rep.method.value}
        for col, s, v in zip(_COLUMNS[1:], sym, values):
            row[col] = v
            row[f"{col}_symbolic"] = s
        rows.append(row)
    return rows


def format_cost_table(reports: Sequence[CostReport], format: CostFormat | str = CostFormat.MARKDOWN) -> str:
    """Render reports as a table with one row per method."""
    format = CostFormat(format)
    rows = _rows(reports)

    if format == CostFormat.JSON:
        first = reports[0] if reports else None
        payload = {
            "P": first.P if first else None,
            "L": first.L if first else None,
            "Q": first.Q if first else None,
            "methods": rows,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    if format == CostFormat.CSV:
        buf = io.StringIO()
        fields = ["method"] + [f"{c}{suffix}" for c in _COLUMNS[1:] for suffix in ("", "_symbolic")]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()

    md = ""
    if reports:
        first = reports[0]
        md += f"P = {first.P}, L = {first.L}, Q = {first.Q}"
        if first.K is not None:
            md += f", K = {first.K}, I = {first.I}"
        md += "\n\n"
    md += "| Method | Uplink | Downlink | Weights | Gradients | Opt. states |\n"
    md += "|--------|--------|----------|---------|-----------|-------------|\n"
    for row in rows:
        cells = [f"{row[f'{c}_symbolic']} = {row[c]:,}" for c in _COLUMNS[1:]]
        md += f"| {row['method']} | " + " | ".join(cells) + " |\n"
    return md
