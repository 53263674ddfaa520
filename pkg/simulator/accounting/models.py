"""Pydantic models for the communication and memory cost model."""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class Method(str, Enum):
    """Federated fine-tuning method."""
    FEDKRSO = "fedkrso"
    FEDIT = "fedit"
    FFA_LORA = "ffa_lora"
    FEDFFT = "fedfft"


class CostFormat(str, Enum):
    """Output format of a cost table."""
    MARKDOWN = "markdown"
    CSV = "csv"
    JSON = "json"


# Symbolic rows: uplink, downlink, weights, gradients, optimizer states.
SYMBOLIC_ROWS: dict[Method, tuple[str, str, str, str, str]] = {
    Method.FEDFFT: ("P", "P", "P", "P", "2P"),
    Method.FEDIT: ("L", "L", "P+L", "L", "2L"),
    Method.FFA_LORA: ("Q", "Q", "P+L", "Q", "2Q"),
    Method.FEDKRSO: ("<= I*Q", "K*Q+K", "P+L", "Q", "2Q"),
}


class MemoryFootprint(BaseModel):
    """Parameter counts held by one client during local training."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: Method
    weight_params: int = Field(..., ge=0)
    gradient_params: int = Field(..., ge=0)
    optstate_params: int = Field(..., ge=0)

    @property
    def total(self) -> int:
        return self.weight_params + self.gradient_params + self.optstate_params


class CostReport(BaseModel):
    """Per-round communication and memory costs of one method, summed over layers."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: Method
    layer_dims: list[tuple[int, int]] = Field(..., min_length=1, description="(d_m, d_n) per layer")
    r: int = Field(..., ge=1, description="Sketch or LoRA rank")
    K: Optional[int] = Field(default=None, ge=1, description="Seeds per round (fedkrso)")
    I: Optional[int] = Field(default=None, ge=1, description="Intervals per round (fedkrso)")

    P: int = Field(..., description="Σ d_m·d_n")
    L: int = Field(..., description="Σ (d_m+d_n)·r")
    Q: int = Field(..., description="Σ d_m·r")

    uplink_params: int = Field(..., description="Per client; an upper bound for fedkrso")
    downlink_params: int = Field(..., description="Per client")
    uplink_is_bound: bool = False
    weight_params: int
    gradient_params: int
    optstate_params: int

    @property
    def memory(self) -> MemoryFootprint:
        return MemoryFootprint(
            method=self.method,
            weight_params=self.weight_params,
            gradient_params=self.gradient_params,
            optstate_params=self.optstate_params,
        )

    def to_bytes(self, element_width: int = 8) -> dict[str, int]:
        """Byte view of every count at the given element width (8 = float64, 2 = bf16)."""
        return {
            "uplink_bytes": self.uplink_params * element_width,
            "downlink_bytes": self.downlink_params * element_width,
            "weight_bytes": self.weight_params * element_width,
            "gradient_bytes": self.gradient_params * element_width,
            "optstate_bytes": self.optstate_params * element_width,
        }
