"""Miniature encoder-decoder split into lower (text) and higher (generation) layers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn
from torch.nn import functional as F


@dataclass
class SeqModelConfig:
    d_model: int = 64
    lower_layers: int = 2
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 4
    ff_dim: int = 128
    max_len: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if min(self.encoder_layers, self.decoder_layers, self.heads, self.ff_dim, self.max_len) < 1:
            raise ValueError("layer counts, heads, ff_dim and max_len must be >= 1")
        if self.lower_layers < 0:
            raise ValueError("lower_layers must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.o = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, memory, blocked=None):
        """``blocked`` is a boolean mask broadcastable to (B, Tq, Tk); True hides a key."""
        B, Tq, d = x.shape
        Tk = memory.shape[1]
        h = self.heads

        def split(t, T):
            return t.view(B, T, h, d // h).transpose(1, 2)

        q, k, v = split(self.q(x), Tq), split(self.k(memory), Tk), split(self.v(memory), Tk)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        if blocked is not None:
            scores = scores.masked_fill(blocked.unsqueeze(1), float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        out = (self.dropout(weights) @ v).transpose(1, 2).reshape(B, Tq, d)
        return self.o(out), weights


class FeedForward(nn.Module):
    def __init__(self, d_model: int, ff_dim: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(d_model, ff_dim)
        self.fc2 = nn.Linear(ff_dim, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.fc2(self.dropout(F.gelu(self.fc1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: SeqModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads, cfg.dropout)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.ff_dim, cfg.dropout)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, pad_blocked):
        y = self.norm1(x)
        x = x + self.dropout(self.attn(y, y, pad_blocked)[0])
        return x + self.dropout(self.ff(self.norm2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: SeqModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads, cfg.dropout)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.heads, cfg.dropout)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.ff_dim, cfg.dropout)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, memory, self_blocked, mem_blocked):
        y = self.norm1(x)
        x = x + self.dropout(self.self_attn(y, y, self_blocked)[0])
        ctx, attn = self.cross_attn(self.norm2(x), memory, mem_blocked)
        x = x + self.dropout(ctx)
        return x + self.dropout(self.ff(self.norm3(x))), attn


@dataclass
class DecoderTrace:
    states: torch.Tensor  # (B, T, d_model), top decoder layer after the final norm
    attention: torch.Tensor  # (B, T, S), top-layer cross-attention averaged over heads


class SeqModel(nn.Module):
    """Token embeddings are shared by the lower stack, the decoder and the tied output layer."""

    def __init__(self, vocab_size: int, cfg: SeqModelConfig, d_graph: int):
        super().__init__()
        self.cfg = cfg
        self.token_embedding = nn.Embedding(vocab_size, cfg.d_model)
        self.encoder_positions = nn.Embedding(cfg.max_len, cfg.d_model)
        self.decoder_positions = nn.Embedding(cfg.max_len, cfg.d_model)
        self.lower = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.lower_layers))
        self.lower_norm = nn.LayerNorm(cfg.d_model) if cfg.lower_layers else None
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.encoder_layers))
        self.encoder_norm = nn.LayerNorm(cfg.d_model)
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.decoder_layers))
        self.decoder_norm = nn.LayerNorm(cfg.d_model)
        self.graph_projection = nn.Linear(d_graph, cfg.d_model, bias=False) if d_graph != cfg.d_model else None
        self.dropout = nn.Dropout(cfg.dropout)
        self.reset_parameters()

    def reset_parameters(self):
        for name, p in self.named_parameters():
            if "norm" in name:
                continue
            if name.endswith("bias"):
                nn.init.zeros_(p)
            else:
                nn.init.normal_(p, 0.0, 0.02)

    def project_graph(self, vectors: torch.Tensor) -> torch.Tensor:
        return vectors if self.graph_projection is None else self.graph_projection(vectors)

    def _check_len(self, T: int):
        if T > self.cfg.max_len:
            raise ValueError(f"sequence length {T} exceeds max_len {self.cfg.max_len}")

    def text_encode_lower(self, ids: torch.Tensor, pad: torch.Tensor | None = None) -> torch.Tensor:
        B, T = ids.shape
        self._check_len(T)
        x = self.token_embedding(ids) + self.encoder_positions(torch.arange(T))
        if not self.lower:
            return x
        x = self.dropout(x)
        blocked = None if pad is None else pad[:, None, :]
        for layer in self.lower:
            x = layer(x, blocked)
        return self.lower_norm(x)

    def encode_inputs(self, inputs: torch.Tensor, pad: torch.Tensor | None = None) -> torch.Tensor:
        """Higher encoder layers over pre-embedded (graph-derived) input vectors."""
        B, S, _ = inputs.shape
        self._check_len(S)
        x = self.dropout(inputs + self.encoder_positions(torch.arange(S)))
        blocked = None if pad is None else pad[:, None, :]
        for layer in self.encoder:
            x = layer(x, blocked)
        return self.encoder_norm(x)

    def decode(self, dec_in: torch.Tensor, memory: torch.Tensor,
               memory_pad: torch.Tensor | None = None) -> tuple[torch.Tensor, DecoderTrace]:
        B, T = dec_in.shape
        self._check_len(T)
        x = self.dropout(self.token_embedding(dec_in) + self.decoder_positions(torch.arange(T)))
        causal = torch.ones(T, T, dtype=torch.bool).triu(1)[None]
        mem_blocked = None if memory_pad is None else memory_pad[:, None, :]
        attn = None
        for layer in self.decoder:
            x, attn = layer(x, memory, causal, mem_blocked)
        states = self.decoder_norm(x)
        logits = states @ self.token_embedding.weight.T
        return logits, DecoderTrace(states, attn.mean(dim=1))
