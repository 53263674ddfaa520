"""Method cards: what each federated method trains, sends and costs.

The orchestrator dispatches by card, and the cost table and tool server
describe methods from the same cards.
"""

from typing import Callable

from pydantic import BaseModel, Field

from simulator.accounting.models import SYMBOLIC_ROWS, Method
from simulator.federation.models import TrainingTrace
from simulator.federation.runners import RUNNERS


class MethodCard(BaseModel):
    """Identity, runner and closed-form cost row of one method."""
    method: Method = Field(..., description="Method identifier")
    name: str = Field(..., description="Human-readable method name")
    description: str = Field(..., description="What the method trains and communicates")
    trains: list[str] = Field(default_factory=list, description="Trainable tensors per layer")
    uplink: str = Field(..., description="What a client uploads each round")
    downlink: str = Field(..., description="What the server broadcasts each round")

    @property
    def runner(self) -> Callable[..., TrainingTrace]:
        return RUNNERS[self.method]

    @property
    def cost_row(self) -> tuple[str, ...]:
        return SYMBOLIC_ROWS[self.method]


# ── Method Registry ────────────────────────────────────────────────

FEDKRSO_CARD = MethodCard(
    method=Method.FEDKRSO,
    name="🎲 FedKRSO",
    description=(
        "Full-weight training in random subspaces drawn from K shared seeds. "
        "Clients keep per-seed accumulators, reset their weights after local "
        "training and rebuild the global model from seeds plus averaged accumulators."
    ),
    trains=["W (through d_m x r compressed gradients)"],
    uplink="touched accumulator blocks, at most I of them",
    downlink="K seeds plus K averaged accumulator blocks",
)

FEDFFT_CARD = MethodCard(
    method=Method.FEDFFT,
    name="🧱 FedFFT",
    description="FedAvg over all weights; the accuracy upper bound and the memory/communication worst case.",
    trains=["W"],
    uplink="full local model",
    downlink="full global model",
)

FEDIT_CARD = MethodCard(
    method=Method.FEDIT,
    name="🧩 FedIT",
    description="LoRA factors B·A on top of frozen weights; both factors are trained and averaged.",
    trains=["B", "A"],
    uplink="B and A",
    downlink="averaged B and A",
)

FFA_LORA_CARD = MethodCard(
    method=Method.FFA_LORA,
    name="🧊 FFA-LoRA",
    description="LoRA with a frozen seeded A factor; only B is trained and averaged, so averaging is exact.",
    trains=["B"],
    uplink="B",
    downlink="averaged B",
)


METHOD_REGISTRY: dict[Method, MethodCard] = {
    Method.FEDKRSO: FEDKRSO_CARD,
    Method.FEDFFT: FEDFFT_CARD,
    Method.FEDIT: FEDIT_CARD,
    Method.FFA_LORA: FFA_LORA_CARD,
}
