"""Autoregressive decoding with incremental block aggregation.

Prefill runs the grouped attention pipeline and caches its focal rows and
aggregated block rows. Each decode step attends over
[focal | aggregated blocks | pending tail] -- everything cached is in the
past, so no mask is needed -- and appends the new token to the tail. Once
the tail reaches m' = ceil(1.1 m) rows, the oldest m of them collapse
into one new aggregated row, weighted by the current query's softmax over
those m keys. The ledger tracks exact per-token column counts and cache
sizes against the vanilla full-attention baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionBatch
from .dga import build_grouped_kv, compute_partition, dga_attention_with_partition
from .errors import InvalidInputError
from .numerics import softmax


def regroup_threshold(m: int) -> int:
    """Tail length that triggers aggregation: ceil(1.1 m)."""
    return int(np.ceil(1.1 * m - 1e-9))


@dataclass
class ComplexityLedger:
    """Exact operation and storage counts for one attention configuration."""

    per_token_columns: int
    cache_entries: int
    score_dot_products: int


@dataclass
class DecoderState:
    """Single-owner mutable cache for one decode session."""

    d: int
    m: int
    gamma: float
    k_focal: np.ndarray
    v_focal: np.ndarray
    k_groups: np.ndarray
    v_groups: np.ndarray
    k_tail: np.ndarray
    v_tail: np.ndarray
    generated: int = 0
    prefill_tokens: int = 0
    prefill_dots: int = 0
    decode_dots: int = 0
    trace: list = field(default_factory=list)

    @classmethod
    def empty(cls, d: int, m: int, gamma: float) -> "DecoderState":
        k_f, v_f, k_g, v_g, k_t, v_t = (np.zeros((0, d)) for _ in range(6))
        return cls(d, m, gamma, k_f, v_f, k_g, v_g, k_t, v_t)

    @property
    def focal_rows(self) -> int:
        return self.k_focal.shape[0]

    @property
    def group_rows(self) -> int:
        return self.k_groups.shape[0]

    @property
    def tail_rows(self) -> int:
        return self.k_tail.shape[0]

    @property
    def total_tokens(self) -> int:
        return self.prefill_tokens + self.generated


def prefill(batch: AttentionBatch, m: int, gamma: float) -> tuple[np.ndarray, DecoderState]:
    """Run grouped attention over the prompt and seed the decode caches.

    Every prompt token lands in exactly one cache: focal rows stay
    individual, non-focal rows are already aggregated into their blocks
    (the divisibility promotion leaves no ungrouped remainder), so the
    tail starts empty.
    """
    partition = compute_partition(batch, m, gamma)
    outputs = dga_attention_with_partition(batch, partition)
    kv = build_grouped_kv(batch, partition)
    L, d = batch.q.shape
    state = DecoderState.empty(d, m, gamma)
    state.k_focal = kv.k_focal.copy()
    state.v_focal = kv.v_focal.copy()
    state.k_groups = kv.k_agg.copy()
    state.v_groups = kv.v_agg.copy()
    state.prefill_tokens = L
    comp_width = m if partition.k > 0 else 0
    state.prefill_dots = L * (partition.r + partition.k + comp_width)
    return outputs, state


def decode_step(
    state: DecoderState, q_new, k_new, v_new
) -> tuple[np.ndarray, DecoderState]:
    """Attend the new token over the caches, then maybe aggregate.

    Mutates `state` in place and returns it alongside the attention
    output. Aggregation fires when the tail reaches ceil(1.1 m) rows,
    collapsing the oldest m with weights softmax(q . K_member / sqrt(d)).
    """
    q = np.asarray(q_new, dtype=np.float64).reshape(-1)
    k = np.asarray(k_new, dtype=np.float64).reshape(-1)
    v = np.asarray(v_new, dtype=np.float64).reshape(-1)
    if q.size != state.d or k.size != state.d or v.size != state.d:
        raise InvalidInputError(f"q/k/v must have width {state.d}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(k)) and np.all(np.isfinite(v))):
        raise InvalidInputError("q/k/v contain non-finite entries")

    state.k_tail = np.vstack([state.k_tail, k[None, :]])
    state.v_tail = np.vstack([state.v_tail, v[None, :]])
    state.generated += 1

    keys = np.concatenate([state.k_focal, state.k_groups, state.k_tail])
    values = np.concatenate([state.v_focal, state.v_groups, state.v_tail])
    scale = 1.0 / np.sqrt(state.d)
    weights = softmax((keys @ q) * scale)
    out = weights @ values

    columns = keys.shape[0]
    state.decode_dots += columns

    if state.tail_rows >= regroup_threshold(state.m):
        members_k = state.k_tail[: state.m]
        members_v = state.v_tail[: state.m]
        p = softmax((members_k @ q) * scale)
        state.k_groups = np.vstack([state.k_groups, (p @ members_k)[None, :]])
        state.v_groups = np.vstack([state.v_groups, (p @ members_v)[None, :]])
        state.k_tail = state.k_tail[state.m :]
        state.v_tail = state.v_tail[state.m :]

    state.trace.append(
        (
            state.generated,
            state.focal_rows,
            state.group_rows,
            state.tail_rows,
            columns,
            state.focal_rows + state.group_rows + state.tail_rows,
        )
    )
    return out, state


def ledger(state: DecoderState) -> ComplexityLedger:
    """Counts for the current state: next-token column cost equals
    focal + block + tail rows; cache entries likewise; dot products
    accumulate prefill blocks plus every decode step's columns."""
    rows = state.focal_rows + state.group_rows + state.tail_rows
    return ComplexityLedger(
        per_token_columns=rows,
        cache_entries=rows,
        score_dot_products=state.prefill_dots + state.decode_dots,
    )


def vanilla_ledger(L: int) -> ComplexityLedger:
    """Full-attention baseline: every token attends all L positions."""
    if L < 0:
        raise InvalidInputError("L must be nonnegative")
    return ComplexityLedger(
        per_token_columns=L, cache_entries=L, score_dot_products=L * L
    )
