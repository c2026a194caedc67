"""Dynamic group attention.

Pipeline: score token importance from (exact or sampled) attention
weights, split tokens into focal and non-focal sets, chunk the non-focal
subsequence into blocks of m, aggregate each block's keys/values with the
block's last-position query, and attend over the compact layout

    [focal tokens | aggregated blocks | complement members]

under an L x (r + k + m) visibility mask. The complement columns expose
the raw members of the one block whose index span contains the query, so
queries inside a partially visible block neither leak future tokens nor
lose past ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionBatch, causal_attention
from .errors import InvalidInputError, InvalidSpecError
from .numerics import softmax
from .rng import RngStream


@dataclass(frozen=True)
class SampleSpec:
    """How many query rows feed the fast importance estimate."""

    recent_count: int = 16
    random_count: int = 16

    def __post_init__(self):
        if self.recent_count < 0 or self.random_count < 0:
            raise InvalidSpecError("sample counts must be nonnegative")
        if self.recent_count + self.random_count < 1:
            raise InvalidSpecError("at least one sampled row is required")

    def positions(self, L: int, rng: RngStream | None) -> np.ndarray:
        """Sorted sampled query positions: recent block + random earlier."""
        if self.recent_count + self.random_count > L:
            raise InvalidSpecError(
                f"spec samples {self.recent_count + self.random_count} rows "
                f"but the sequence has only {L}"
            )
        recent = np.arange(L - self.recent_count, L)
        if self.random_count == 0:
            return recent
        if rng is None:
            raise InvalidInputError("random sampling requires an RngStream")
        earlier = rng.choice_without_replacement(
            L - self.recent_count, self.random_count
        )
        return np.concatenate([earlier, recent])


@dataclass(frozen=True)
class TokenPartition:
    """Focal indices plus contiguous blocks over the non-focal subsequence."""

    L: int
    m: int
    gamma: float
    focal: np.ndarray
    groups: tuple
    scores: np.ndarray

    @property
    def r(self) -> int:
        return self.focal.size

    @property
    def k(self) -> int:
        return len(self.groups)

    def group_span(self, g: int) -> tuple[int, int]:
        idx = self.groups[g]
        return int(idx[0]), int(idx[-1])

    def neighbor_group(self, i: int) -> int | None:
        """The unique block whose index span contains i, if any."""
        for g in range(self.k):
            lo, hi = self.group_span(g)
            if lo <= i <= hi:
                return g
        return None


def importance_scores_exact(weights: np.ndarray) -> np.ndarray:
    """Column sums of the causal weight matrix, each divided by the
    number of rows that can see the column (L - i for 0-based column i)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise InvalidInputError("weights must be a square causal matrix")
    L = weights.shape[0]
    return weights.sum(axis=0) / (L - np.arange(L))


def approx_importance_scores(
    batch: AttentionBatch, spec: SampleSpec, rng: RngStream | None = None
) -> np.ndarray:
    """Importance scores from a sampled subset of query rows.

    Each sampled row p contributes its causal softmax over positions
    <= p; column i is averaged over the sampled rows that can see it.
    Columns no sampled row can see score 0.
    """
    L = batch.length
    positions = spec.positions(L, rng)
    scale = 1.0 / np.sqrt(batch.width)
    col_sum = np.zeros(L)
    for p in positions:
        row = softmax((batch.k[: p + 1] @ batch.q[p]) * scale)
        col_sum[: p + 1] += row
    # positions is sorted, so rows seeing column i are those with p >= i.
    visible = positions.size - np.searchsorted(positions, np.arange(L))
    scores = np.zeros(L)
    np.divide(col_sum, visible, out=scores, where=visible > 0)
    return scores


def partition_tokens(scores, gamma: float, m: int) -> TokenPartition:
    """Split tokens by score into focal singles and non-focal blocks of m.

    The top max(1, ceil(gamma * L)) scorers are focal; if the remainder is
    not divisible by m, the next-highest scorers are promoted until it is.
    Ties break by ascending index. Remaining tokens are chunked, in
    original order, into consecutive blocks of m.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise InvalidInputError("scores must be a nonempty vector")
    if not (0.0 < gamma <= 1.0):
        raise InvalidInputError("gamma must lie in (0, 1]")
    if m < 1:
        raise InvalidInputError("m must be at least 1")
    L = scores.size
    # Tolerate float fuzz like 0.07 * 100 = 7.000000000000001 before ceil.
    r0 = max(1, int(np.ceil(gamma * L - 1e-9)))
    r = r0 + (L - r0) % m
    by_score = np.argsort(-scores, kind="stable")
    focal = np.sort(by_score[:r])
    non_focal = np.setdiff1d(np.arange(L), focal, assume_unique=True)
    k = non_focal.size // m
    groups = tuple(non_focal[g * m : (g + 1) * m] for g in range(k))
    return TokenPartition(L, m, float(gamma), focal, groups, scores)


@dataclass(frozen=True)
class GroupedKV:
    """Compact attention layout for one partition.

    k_focal/v_focal hold the focal rows in ascending token order;
    k_agg/v_agg hold one aggregated row per block (weights in p_rows, one
    softmax per block from the block's last-position query); neighbor[i]
    is the block whose span contains query i, or -1.
    """

    k_focal: np.ndarray
    v_focal: np.ndarray
    k_agg: np.ndarray
    v_agg: np.ndarray
    p_rows: np.ndarray
    neighbor: np.ndarray
    partition: TokenPartition


def build_grouped_kv(batch: AttentionBatch, partition: TokenPartition) -> GroupedKV:
    if partition.L != batch.length:
        raise InvalidInputError("partition length mismatch")
    d = batch.width
    scale = 1.0 / np.sqrt(d)
    k_f = batch.k[partition.focal].copy()
    v_f = batch.v[partition.focal].copy()
    k_agg = np.zeros((partition.k, d))
    v_agg = np.zeros((partition.k, d))
    p_rows = np.zeros((partition.k, partition.m))
    neighbor = np.full(partition.L, -1, dtype=np.int64)
    for g, members in enumerate(partition.groups):
        last = members[-1]
        p = softmax((batch.k[members] @ batch.q[last]) * scale)
        p_rows[g] = p
        k_agg[g] = p @ batch.k[members]
        v_agg[g] = p @ batch.v[members]
        lo, hi = int(members[0]), int(members[-1])
        neighbor[lo : hi + 1] = g
    return GroupedKV(k_f, v_f, k_agg, v_agg, p_rows, neighbor, partition)


def build_group_mask(partition: TokenPartition) -> np.ndarray:
    """L x (r + k + m) binary visibility mask.

    Focal column for token j is on for queries i >= j. Block column g is
    on once the whole block is past (i >= max of the block). Complement
    columns carry the residue of the query's own straddling block: causal
    member bits minus the (repeated) block bit, which is nonzero only
    while the block is partially visible.
    """
    L, m, r, k = partition.L, partition.m, partition.r, partition.k
    rows = np.arange(L)[:, None]
    mask = np.zeros((L, r + k + m))
    mask[:, :r] = rows >= partition.focal[None, :]
    if k == 0:
        return mask
    group_max = np.array([span[1] for span in map(partition.group_span, range(k))])
    block_bits = (rows >= group_max[None, :]).astype(np.float64)
    mask[:, r : r + k] = block_bits
    member_idx = np.concatenate(partition.groups)
    member_bits = (rows >= member_idx[None, :]).astype(np.float64)
    residue = member_bits - np.repeat(block_bits, m, axis=1)
    for i in range(L):
        g = partition.neighbor_group(i)
        if g is not None:
            mask[i, r + k :] = residue[i, g * m : (g + 1) * m]
    return mask


def masked_attention_row(q_i, keys, values, visible, scale) -> np.ndarray:
    """One query's output: softmax restricted to the visible columns.

    Masking narrows the softmax support instead of adding large negative
    sentinels, so hidden columns have exactly zero weight.
    """
    logits = (keys @ q_i) * scale
    w = softmax(logits[visible])
    return w @ values[visible]


def dga_attention_with_partition(
    batch: AttentionBatch, partition: TokenPartition
) -> np.ndarray:
    """Grouped attention output for a fixed, precomputed partition."""
    kv = build_grouped_kv(batch, partition)
    mask = build_group_mask(partition)
    L, d = batch.q.shape
    r, k, m = partition.r, partition.k, partition.m
    scale = 1.0 / np.sqrt(d)
    out = np.empty((L, d))
    pad_k = np.zeros((m, d))
    for i in range(L):
        g = kv.neighbor[i]
        if g >= 0:
            comp_k = batch.k[partition.groups[g]]
            comp_v = batch.v[partition.groups[g]]
        else:
            comp_k = pad_k
            comp_v = pad_k
        keys = np.concatenate([kv.k_focal, kv.k_agg, comp_k])
        values = np.concatenate([kv.v_focal, kv.v_agg, comp_v])
        visible = mask[i] > 0
        out[i] = masked_attention_row(batch.q[i], keys, values, visible, scale)
    return out


def compute_partition(
    batch: AttentionBatch,
    m: int,
    gamma: float,
    spec: SampleSpec | None = None,
    rng: RngStream | None = None,
) -> TokenPartition:
    """Score tokens (exactly, or via the sampling spec) and partition."""
    if spec is None:
        _, weights = causal_attention(batch)
        scores = importance_scores_exact(weights)
    else:
        scores = approx_importance_scores(batch, spec, rng)
    return partition_tokens(scores, gamma, m)


def dga_attention(
    batch: AttentionBatch,
    m: int,
    gamma: float,
    spec: SampleSpec | None = None,
    rng: RngStream | None = None,
) -> np.ndarray:
    """Full pipeline: importance scores, partition, grouped masked attention."""
    partition = compute_partition(batch, m, gamma, spec, rng)
    return dga_attention_with_partition(batch, partition)
