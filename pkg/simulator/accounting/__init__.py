from simulator.accounting.costs import check_measured_costs, format_cost_table, memory_footprint, round_costs
from simulator.accounting.models import SYMBOLIC_ROWS, CostFormat, CostReport, MemoryFootprint, Method

__all__ = [
    "SYMBOLIC_ROWS",
    "CostFormat",
    "CostReport",
    "MemoryFootprint",
    "Method",
    "check_measured_costs",
    "format_cost_table",
    "memory_footprint",
    "round_costs",
]
