"""Small decoder-only sequence models with optional adaptive computation.

Two backbones share one interface: a causal transformer (pre-norm
attention + MLP blocks) and a stacked LSTM. Each block maps a hidden
sequence to a hidden sequence, which makes the depth-extension modes
uniform:

  none       every block applied once
  layerwise  every block iterated under its own halting unit
  modelwise  the whole stack (embeddings excluded) iterated under one unit
  fixed      every block iterated a constant number of times, no halting

The forward pass returns logits plus the halting diagnostics needed for
the time-penalty term.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal

import torch
from torch import Tensor, nn

from .act import ActState, act_forward, fct_forward

__all__ = ["ModelConfig", "SequenceModel", "build_model"]

ACT_MODES = ("none", "layerwise", "modelwise", "fixed")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    max_seq_len: int
    arch: Literal["transformer", "lstm"] = "transformer"
    layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    act_mode: str = "none"
    max_hops: int = 4
    fixed_hops: int = 3
    epsilon: float = 0.01
    tau: float = 0.01

    def __post_init__(self) -> None:
        if self.arch not in ("transformer", "lstm"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.act_mode not in ACT_MODES:
            raise ValueError(f"act_mode must be one of {ACT_MODES}, got {self.act_mode!r}")
        if self.fixed_hops < 1:
            raise ValueError(f"fixed_hops must be >= 1, got {self.fixed_hops}")
        if self.max_hops < 1:
            raise ValueError(f"max_hops must be >= 1, got {self.max_hops}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class TransformerBlock(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = nn.MultiheadAttention(d_model, n_heads, batch_first=True)
        self.ln2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 4 * d_model),
            nn.GELU(),
            nn.Linear(4 * d_model, d_model),
        )

    def forward(self, h: Tensor) -> Tensor:
        n = h.shape[1]
        mask = torch.triu(
            torch.ones(n, n, device=h.device, dtype=torch.bool), diagonal=1
        )
        x = self.ln1(h)
        attn_out, _ = self.attn(x, x, x, attn_mask=mask, need_weights=False)
        h = h + attn_out
        h = h + self.mlp(self.ln2(h))
        return h


class LstmBlock(nn.Module):
    def __init__(self, d_model: int):
        super().__init__()
        self.lstm = nn.LSTM(d_model, d_model, num_layers=1, batch_first=True)

    def forward(self, h: Tensor) -> Tensor:
        out, _ = self.lstm(h)
        return out


class SequenceModel(nn.Module):
    """Token embedding + iterated blocks + tied output head."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        self.tok_embed = nn.Embedding(config.vocab_size, d)
        self.pos_embed = nn.Embedding(config.max_seq_len, d)
        if config.arch == "transformer":
            self.blocks = nn.ModuleList(
                TransformerBlock(d, config.n_heads) for _ in range(config.layers)
            )
        else:
            self.blocks = nn.ModuleList(LstmBlock(d) for _ in range(config.layers))
        self.ln_f = nn.LayerNorm(d)
        self.head = nn.Linear(d, config.vocab_size, bias=False)
        if config.act_mode == "layerwise":
            self.halt_units = nn.ModuleList(
                nn.Linear(d, 1) for _ in range(config.layers)
            )
        elif config.act_mode == "modelwise":
            self.halt_units = nn.ModuleList([nn.Linear(d, 1)])
        else:
            self.halt_units = nn.ModuleList()
        for unit in self.halt_units:
            nn.init.zeros_(unit.weight)
            nn.init.constant_(unit.bias, -1.0)  # start with p ~ 0.27: explore depth

    def _halt_fn(self, unit: nn.Linear):
        return lambda h: torch.sigmoid(unit(h)).squeeze(-1)

    def forward(self, tokens: Tensor) -> tuple[Tensor, list[ActState]]:
        """tokens: (B, N) int64. Returns (logits (B, N, V), act states)."""
        B, N = tokens.shape
        if N > self.config.max_seq_len:
            raise ValueError(
                f"sequence length {N} exceeds configured maximum {self.config.max_seq_len}"
            )
        pos = torch.arange(N, device=tokens.device)
        h = self.tok_embed(tokens) + self.pos_embed(pos)[None, :, :]
        mode = self.config.act_mode
        states: list[ActState] = []
        if mode == "none":
            for block in self.blocks:
                h = block(h)
        elif mode == "fixed":
            for block in self.blocks:
                h = fct_forward(h, block, self.config.fixed_hops)
        elif mode == "layerwise":
            for block, unit in zip(self.blocks, self.halt_units):
                h, st = act_forward(
                    h, block, self._halt_fn(unit),
                    epsilon=self.config.epsilon, max_hops=self.config.max_hops,
                )
                states.append(st)
        else:  # modelwise: iterate the whole embedding-free stack

            def stack(x: Tensor) -> Tensor:
                for block in self.blocks:
                    x = block(x)
                return x

            h, st = act_forward(
                h, stack, self._halt_fn(self.halt_units[0]),
                epsilon=self.config.epsilon, max_hops=self.config.max_hops,
            )
            states.append(st)
        return self.head(self.ln_f(h)), states

    def remainders(self, states: list[ActState]) -> list[Tensor]:
        return [st.remainder for st in states]


def build_model(config: ModelConfig) -> SequenceModel:
    return SequenceModel(config)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
