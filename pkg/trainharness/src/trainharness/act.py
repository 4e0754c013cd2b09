"""Adaptive computation time: per-position halting over an iterated block.

A halting unit turns each position's hidden state into a probability p_t of
stopping after the t-th application of the block f. Weights accumulate
until they would reach 1 - epsilon (or the hop cap forces a stop); the
final step's weight is replaced by the remainder R = 1 - sum of the earlier
weights, so the weights always sum to exactly 1 and the output is the
weight-mixed combination of the successive block outputs:

    y = sum_t w_t * f^{t+1}(h0),   w_t = p_t except w_{T-1} = R.

R is returned for the time-penalty term: penalizing the remainder pushes
probability mass into earlier steps, shortening computation. Positions
halt independently; halted positions keep their frozen hidden state while
the rest continue, and contribute nothing further to the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import torch
from torch import Tensor

__all__ = ["ActState", "act_forward", "act_loss", "fct_forward"]


@dataclass
class ActState:
    """Per-position halting diagnostics from one act_forward call.

    weights: (T_max, B, N) mixture weights, zero after a position halts;
    they sum to 1 over the first axis. remainder: the replaced final
    weight. hops: number of block applications per position (<= max_hops).
    """

    weights: Tensor
    remainder: Tensor
    hops: Tensor
    cum_before_halt: Tensor

    @property
    def mean_hops(self) -> float:
        return float(self.hops.float().mean())

    @property
    def mean_remainder(self) -> float:
        return float(self.remainder.detach().mean())


def act_forward(
    h0: Tensor,
    step_fn: Callable[[Tensor], Tensor],
    halt_fn: Callable[[Tensor], Tensor],
    epsilon: float = 0.01,
    max_hops: int = 4,
) -> tuple[Tensor, ActState]:
    """Iterate `step_fn` with learned halting.

    h0: (B, N, d) hidden sequence. step_fn maps (B, N, d) -> (B, N, d);
    halt_fn maps (B, N, d) -> (B, N) halting probabilities in (0, 1).
    Returns the remainder-weighted output and the halting diagnostics.
    """
    if max_hops < 1:
        raise ValueError(f"max_hops must be >= 1, got {max_hops}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    B, N, _ = h0.shape
    dev, dtype = h0.device, h0.dtype
    cum = torch.zeros(B, N, device=dev, dtype=dtype)
    still = torch.ones(B, N, device=dev, dtype=torch.bool)
    y = torch.zeros_like(h0)
    remainder = torch.zeros(B, N, device=dev, dtype=dtype)
    cum_before_halt = torch.zeros(B, N, device=dev, dtype=dtype)
    hops = torch.zeros(B, N, device=dev, dtype=torch.long)
    weights = []
    h = h0
    for t in range(max_hops):
        p = halt_fn(h)
        h_next = step_fn(h)
        if not torch.isfinite(h_next).all() or not torch.isfinite(p).all():
            raise FloatingPointError(f"non-finite activations at hop {t}")
        force = t == max_hops - 1
        halt_now = still & (force | (cum + p >= 1.0 - epsilon))
        w = torch.where(halt_now, 1.0 - cum, p) * still.to(dtype)
        weights.append(w)
        y = y + w.unsqueeze(-1) * h_next
        remainder = torch.where(halt_now, 1.0 - cum, remainder)
        cum_before_halt = torch.where(halt_now, cum, cum_before_halt)
        hops = hops + still.long()
        cum = cum + torch.where(halt_now, torch.zeros_like(p), p) * still.to(dtype)
        carry = still & ~halt_now
        h = torch.where(carry.unsqueeze(-1), h_next, h)
        still = carry
        if not bool(still.any()):
            break
    state = ActState(
        weights=torch.stack(weights),
        remainder=remainder,
        hops=hops,
        cum_before_halt=cum_before_halt,
    )
    return y, state


def act_loss(task_loss: Tensor, remainders: Tensor | Sequence[Tensor], tau: float) -> Tensor:
    """task_loss + tau * mean remainder (over positions, and layers if given)."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if isinstance(remainders, Tensor):
        penalty = remainders.mean()
    else:
        if not remainders:
            raise ValueError("no remainders given")
        penalty = torch.stack([r.mean() for r in remainders]).mean()
    return task_loss + tau * penalty


def fct_forward(h0: Tensor, step_fn: Callable[[Tensor], Tensor], fixed_hops: int) -> Tensor:
    """Apply `step_fn` a fixed number of times; no halting unit, no mixing."""
    if fixed_hops < 1:
        raise ValueError(f"fixed_hops must be >= 1, got {fixed_hops}")
    h = h0
    for _ in range(fixed_hops):
        h = step_fn(h)
    return h
