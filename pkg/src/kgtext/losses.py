"""Training objectives: generation, copy switching, alignment and reconstruction."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import torch
from torch import nn
from torch.nn import functional as F

DEFAULT_LAMBDAS = (0.7, 0.5, 0.5)
_TINY = 1e-30


def _masked_reduce(values: torch.Tensor, valid: torch.Tensor | None, normalize: bool) -> torch.Tensor:
    """Per-sequence mean (or sum) over valid positions, then mean over the batch."""
    if values.dim() == 1:
        values = values[None]
        valid = None if valid is None else valid[None]
    if valid is None:
        valid = torch.ones_like(values, dtype=torch.bool)
    v = values * valid
    per_seq = v.sum(-1)
    if normalize:
        per_seq = per_seq / valid.sum(-1).clamp_min(1)
    return per_seq.mean()


def lm_loss(logits: torch.Tensor, target_ids: torch.Tensor, copy_mix: torch.Tensor | None = None,
            valid: torch.Tensor | None = None, normalize: bool = True) -> torch.Tensor:
    """Negative log-likelihood of the targets.

    With ``copy_mix`` (a probability tensor shaped like ``logits``) the mixed
    distribution is scored instead of ``softmax(logits)``.
    """
    if logits.shape[:-1] != target_ids.shape:
        raise ValueError(f"logits {tuple(logits.shape)} do not align with targets {tuple(target_ids.shape)}")
    if copy_mix is None:
        nll = -F.log_softmax(logits, dim=-1).gather(-1, target_ids.unsqueeze(-1)).squeeze(-1)
    else:
        if copy_mix.shape != logits.shape:
            raise ValueError("copy_mix must have the same shape as logits")
        p = copy_mix.gather(-1, target_ids.unsqueeze(-1)).squeeze(-1)
        nll = -torch.log(p.clamp_min(_TINY))
    return _masked_reduce(nll, valid, normalize)


class CopyGate(nn.Module):
    """``sigmoid(W1 s_j + W2 v_wj + b_copy)``."""

    def __init__(self, d_model: int):
        super().__init__()
        self.w_state = nn.Parameter(torch.zeros(d_model))
        self.w_token = nn.Parameter(torch.zeros(d_model))
        self.bias = nn.Parameter(torch.zeros(()))

    def forward(self, states: torch.Tensor, token_vectors: torch.Tensor) -> torch.Tensor:
        return copy_gate(states, token_vectors, self.w_state, self.w_token, self.bias)


def copy_gate(states: torch.Tensor, token_vectors: torch.Tensor, w_state: torch.Tensor,
              w_token: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(states @ w_state + token_vectors @ w_token + bias)


def copy_loss(gates: torch.Tensor, copy_mask: torch.Tensor, valid: torch.Tensor | None = None,
              normalize: bool = True, bce: bool = False) -> torch.Tensor:
    """Sum of gate values on generated positions plus ``1 - gate`` on copied ones.

    ``bce=True`` swaps in the log-likelihood form ``-log(1 - g)`` / ``-log g``.
    """
    if gates.shape != copy_mask.shape:
        raise ValueError(f"gates {tuple(gates.shape)} and copy mask {tuple(copy_mask.shape)} differ in shape")
    copy_mask = copy_mask.bool()
    if bce:
        per = torch.where(copy_mask, -torch.log(gates.clamp_min(_TINY)),
                          -torch.log((1 - gates).clamp_min(_TINY)))
    else:
        per = torch.where(copy_mask, 1 - gates, gates)
    return _masked_reduce(per, valid, normalize)


def copy_distribution(attention: torch.Tensor, source_ids: torch.Tensor, vocab_size: int) -> torch.Tensor:
    """Scatter attention mass onto the vocabulary ids of copyable source positions.

    ``source_ids`` is -1 where a position cannot be copied (separators, padding);
    the remaining mass is renormalized.
    """
    copyable = source_ids >= 0
    att = attention * copyable[:, None, :]
    att = att / att.sum(-1, keepdim=True).clamp_min(_TINY)
    idx = source_ids.clamp_min(0)[:, None, :].expand_as(att)
    out = attention.new_zeros(*att.shape[:2], vocab_size)
    return out.scatter_add(-1, idx, att)


def mix_distributions(logits: torch.Tensor, copy_probs: torch.Tensor, gates: torch.Tensor) -> torch.Tensor:
    g = gates.unsqueeze(-1)
    return g * copy_probs + (1 - g) * torch.softmax(logits, dim=-1)


def ra_loss(gnn_embeddings, plm_embeddings, normalize: bool = True) -> torch.Tensor:
    """Mean (or sum) Euclidean distance between paired entity embeddings.

    Accepts two mappings entity -> vector with equal key sets, or two aligned
    (n, d) tensors.
    """
    if isinstance(gnn_embeddings, Mapping):
        if set(gnn_embeddings) != set(plm_embeddings):
            raise ValueError("embedding maps have different entity sets")
        keys = sorted(gnn_embeddings)
        if not keys:
            return torch.zeros(())
        a = torch.stack([torch.as_tensor(gnn_embeddings[k]) for k in keys])
        b = torch.stack([torch.as_tensor(plm_embeddings[k]) for k in keys])
    else:
        a, b = gnn_embeddings, plm_embeddings
        if a.shape != b.shape:
            raise ValueError(f"embedding shapes {tuple(a.shape)} and {tuple(b.shape)} differ")
        if a.shape[0] == 0:
            return a.new_zeros(())
    dist = torch.linalg.vector_norm(a - b, dim=-1)
    return dist.mean() if normalize else dist.sum()


class RelationClassifier(nn.Module):
    """``softmax(W3 [h; t; h*t] + b2)`` over the relation vocabulary."""

    def __init__(self, d_model: int, num_relations: int):
        super().__init__()
        self.linear = nn.Linear(3 * d_model, num_relations)
        nn.init.normal_(self.linear.weight, 0.0, 0.02)
        nn.init.zeros_(self.linear.bias)

    def forward(self, head: torch.Tensor, tail: torch.Tensor) -> torch.Tensor:
        """Log-probabilities, shape (..., num_relations)."""
        return F.log_softmax(self.linear(torch.cat([head, tail, head * tail], dim=-1)), dim=-1)


def relation_logits(head: torch.Tensor, tail: torch.Tensor, weight: torch.Tensor,
                    bias: torch.Tensor) -> torch.Tensor:
    """Relation probabilities for one (head, tail) state pair."""
    return torch.softmax(torch.cat([head, tail, head * tail], dim=-1) @ weight.T + bias, dim=-1)


def gr_loss(log_probs: torch.Tensor, relations: torch.Tensor,
            normalize: bool = True) -> tuple[torch.Tensor, bool]:
    """NLL of the gold relation per scoreable triple; returns (loss, scored_any)."""
    if log_probs.shape[0] == 0:
        return log_probs.new_zeros(()), False
    nll = -log_probs.gather(-1, relations.unsqueeze(-1)).squeeze(-1)
    return (nll.mean() if normalize else nll.sum()), True


@dataclass
class LossBundle:
    lm: torch.Tensor
    pg: torch.Tensor
    ra: torch.Tensor
    gr: torch.Tensor
    total: torch.Tensor
    lambdas: tuple[float, float, float]

    def as_dict(self) -> dict[str, float]:
        vals = (self.lm, self.pg, self.ra, self.gr, self.total)
        return dict(zip(("L_LM", "L_PG", "L_RA", "L_GR", "total"), (float(v.detach()) for v in vals)))


def total_loss(l_lm, l_pg, l_ra, l_gr, lambdas=DEFAULT_LAMBDAS) -> LossBundle:
    """``L_LM + l1*L_PG + l2*L_RA + l3*L_GR``; zero-weighted terms are left out of the graph."""
    lam1, lam2, lam3 = (float(x) for x in lambdas)
    if min(lam1, lam2, lam3) < 0:
        raise ValueError("loss coefficients must be non-negative")
    total = l_lm
    for lam, term in ((lam1, l_pg), (lam2, l_ra), (lam3, l_gr)):
        if lam != 0.0:
            total = total + lam * term
    parts = [_as_tensor(x) for x in (l_lm, l_pg, l_ra, l_gr)]
    return LossBundle(*parts, total=_as_tensor(total), lambdas=(lam1, lam2, lam3))


def _as_tensor(x) -> torch.Tensor:
    # plain numbers stay double precision so hand-computed totals are exact
    return x if isinstance(x, torch.Tensor) else torch.tensor(float(x), dtype=torch.float64)
