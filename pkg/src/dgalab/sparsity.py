"""Concentration metrics for attention-weight rows.

A length-L weight row is rho-sparse when some entry strictly exceeds
1/(L*rho). The module estimates the probability of that event empirically
and computes a Monte Carlo lower bound from per-coordinate head/tail
statistics of the logit distribution.

Bound construction: for any x > 0 the event {alpha_j <= 1/(L*rho)} is
contained in {exp(xi_j) <= x} union {(L*rho - 1) x <= sum_{k != j}
exp(xi_k)} (if both fail, coordinate j already exceeds the threshold), so

    P_sparse(L, rho) >= max_x 1 - P{head(x) or tail(x)}^L,

where the outer product step assumes the negative dependence of weights
that share a normalizer. The guarantee is verified only for i.i.d. logit
samplers; correlated sources are reported, never asserted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError, InvalidRateError
from .numerics import check_prob_vector, softmax_rows
from .rng import RngStream

_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class LogitSource:
    """Named distribution over length-L logit vectors.

    draw(rng, n, L) returns an (n, L) float array. `exchangeable` controls
    whether the bound may use a single generic coordinate; correlated but
    non-exchangeable sources average the bound over coordinates.
    """

    name: str
    draw: Callable[[RngStream, int, int], np.ndarray]
    exchangeable: bool = True


def gaussian_source(mean: float = 0.0, std: float = 1.0) -> LogitSource:
    def draw(rng, n, L):
        return mean + std * rng.generator().standard_normal((n, L))

    return LogitSource(f"gaussian(mean={mean},std={std})", draw)


def student_t_source(df: float = 2.0, scale: float = 1.0) -> LogitSource:
    def draw(rng, n, L):
        return scale * rng.generator().standard_t(df, size=(n, L))

    return LogitSource(f"student_t(df={df},scale={scale})", draw)


def mixture_source(
    spike_prob: float = 0.1, spike_mean: float = 3.0, std: float = 1.0
) -> LogitSource:
    """Gaussian bulk with an occasional shifted spike component."""

    def draw(rng, n, L):
        gen = rng.generator()
        base = std * gen.standard_normal((n, L))
        spikes = gen.random((n, L)) < spike_prob
        return base + spike_mean * spikes

    return LogitSource(
        f"mixture(p={spike_prob},mu={spike_mean},std={std})", draw
    )


def constant_source(value: float) -> LogitSource:
    def draw(rng, n, L):
        return np.full((n, L), float(value))

    return LogitSource(f"constant({value})", draw)


def attention_source(d: int = 16) -> LogitSource:
    """Last-token logits K @ q / sqrt(d) of random Gaussian batches.

    Coordinates are exchangeable but share the query vector, so they are
    positively correlated; bound values for this source are reported only.
    """

    def draw(rng, n, L):
        gen = rng.generator()
        out = np.empty((n, L))
        block = max(1, _CHUNK_ENTRIES // (L * d))
        for start in range(0, n, block):
            stop = min(n, start + block)
            keys = gen.standard_normal((stop - start, L, d))
            queries = gen.standard_normal((stop - start, d))
            out[start:stop] = np.einsum("nld,nd->nl", keys, queries) / np.sqrt(d)
        return out

    return LogitSource(f"attention(d={d})", draw, exchangeable=True)


def named_source(name: str, d: int = 16) -> LogitSource:
    table = {
        "gaussian": gaussian_source,
        "student_t": student_t_source,
        "mixture": mixture_source,
    }
    if name == "attention":
        return attention_source(d)
    if name not in table:
        raise InvalidInputError(f"unknown logit source {name!r}")
    return table[name]()


def _check_rho(rho: float, L: int) -> float:
    rho = float(rho)
    if not (1.0 / L < rho <= 1.0):
        raise InvalidRateError(
            f"rho must lie in (1/L, 1] = ({1.0 / L:.6g}, 1]; got {rho!r}"
        )
    return rho


def is_rho_sparse(alpha, rho: float) -> bool:
    """True when some weight strictly exceeds 1/(L*rho)."""
    alpha = check_prob_vector(alpha, "alpha")
    rho = _check_rho(rho, alpha.size)
    return bool(alpha.max() > 1.0 / (alpha.size * rho))


def empirical_p_sparse(weight_rows, rho: float) -> float:
    """Fraction of weight rows that are rho-sparse."""
    rows = np.asarray(weight_rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    if rows.size == 0:
        raise InvalidInputError("no weight rows given")
    L = rows.shape[1]
    rho = _check_rho(rho, L)
    return float(np.mean(rows.max(axis=1) > 1.0 / (L * rho)))


def sample_weight_rows(source: LogitSource, L: int, n: int, rng: RngStream) -> np.ndarray:
    """n softmaxed logit rows of length L from the source."""
    return softmax_rows(source.draw(rng, n, L))


@dataclass(frozen=True)
class BoundDetail:
    bound: float
    standard_error: float
    x_star: float


def _logsumexp_rest(logits: np.ndarray) -> np.ndarray:
    """log sum_{k != 0} exp(logits[:, k]) per row, overflow-safe."""
    rest = logits[:, 1:]
    m = rest.max(axis=1)
    return m + np.log(np.exp(rest - m[:, None]).sum(axis=1))


def p_sparse_lower_bound(
    source: LogitSource,
    L: int,
    rho: float,
    x_grid=None,
    trials: int = 10_000,
    rng: RngStream = RngStream(0),
) -> float:
    return p_sparse_lower_bound_detail(source, L, rho, x_grid, trials, rng).bound


def p_sparse_lower_bound_detail(
    source: LogitSource,
    L: int,
    rho: float,
    x_grid=None,
    trials: int = 10_000,
    rng: RngStream = RngStream(0),
) -> BoundDetail:
    """Monte Carlo sparsity lower bound, maximized over a grid of x.

    The per-coordinate head/tail events are evaluated in log space so
    heavy-tailed logits cannot overflow. When x_grid is None, 32
    log-spaced points spanning the [1st, 99th] percentile of exp(xi_j)
    are used. Non-exchangeable sources average the per-x probability over
    all coordinates before maximizing.
    """
    rho = _check_rho(rho, L)
    if trials < 10_000:
        raise InvalidInputError("trials must be at least 10^4")
    if x_grid is not None:
        x_grid = np.asarray(x_grid, dtype=np.float64)
        if x_grid.size == 0:
            raise InvalidInputError("x_grid must be nonempty")
        if np.any(x_grid <= 0) or not np.all(np.isfinite(x_grid)):
            raise InvalidInputError("x_grid values must be positive and finite")

    log_thresh = np.log(L * rho - 1.0)
    block = max(1, _CHUNK_ENTRIES // L)

    if source.exchangeable:
        log_head = np.empty(trials)
        log_tail = np.empty(trials)
        for start in range(0, trials, block):
            stop = min(trials, start + block)
            logits = source.draw(rng.child(start), stop - start, L)
            log_head[start:stop] = logits[:, 0]
            log_tail[start:stop] = _logsumexp_rest(logits)
        if x_grid is None:
            lo, hi = np.percentile(log_head, [1.0, 99.0])
            grid_logs = np.linspace(lo, hi, 32)
        else:
            grid_logs = np.log(np.sort(x_grid))
        best = BoundDetail(-np.inf, 0.0, np.nan)
        for lx in grid_logs:
            union = (log_head <= lx) | (log_thresh + lx <= log_tail)
            u = float(union.mean())
            bound = min(1.0, max(0.0, 1.0 - u**L))
            if bound > best.bound:
                se = L * u ** max(0, L - 1) * np.sqrt(u * (1.0 - u) / trials)
                best = BoundDetail(bound, float(se), float(np.exp(lx)))
        return best

    # Non-exchangeable source: per-coordinate bounds, averaged over j.
    logits = source.draw(rng, trials, L)
    log_total = np.logaddexp.reduce(logits, axis=1)
    with np.errstate(divide="ignore"):
        log_rest = log_total[:, None] + np.log1p(
            -np.exp(np.minimum(logits - log_total[:, None], 0.0))
        )
    if x_grid is None:
        lo, hi = np.percentile(logits, [1.0, 99.0])
        grid_logs = np.linspace(lo, hi, 32)
    else:
        grid_logs = np.log(np.sort(x_grid))
    best = BoundDetail(-np.inf, 0.0, np.nan)
    for lx in grid_logs:
        union = (logits <= lx) | (log_thresh + lx <= log_rest)
        u_per_j = union.mean(axis=0)
        bounds = np.clip(1.0 - u_per_j**L, 0.0, 1.0)
        bound = float(bounds.mean())
        if bound > best.bound:
            se_per_j = L * u_per_j ** (L - 1) * np.sqrt(u_per_j * (1.0 - u_per_j) / trials)
            se = float(np.sqrt(np.mean(se_per_j**2) / L))
            best = BoundDetail(bound, se, float(np.exp(lx)))
    return best


@dataclass(frozen=True)
class SparsityCell:
    empirical_p: float
    bound_p: float
    samples: int


@dataclass
class SparsityReport:
    """Empirical and bound sparsity probabilities keyed by (L, rho)."""

    entries: dict = field(default_factory=dict)

    def add(self, L: int, rho: float, cell: SparsityCell) -> None:
        if not (0.0 <= cell.empirical_p <= 1.0 and 0.0 <= cell.bound_p <= 1.0):
            raise InvalidInputError("probabilities must lie in [0, 1]")
        if cell.samples <= 0:
            raise InvalidInputError("samples must be positive")
        _check_rho(rho, L)
        self.entries[(int(L), float(rho))] = cell

    def rows(self) -> list:
        out = []
        for (L, rho) in sorted(self.entries):
            cell = self.entries[(L, rho)]
            out.append((L, rho, cell.empirical_p, cell.bound_p, cell.samples))
        return out

    def to_csv_text(self) -> str:
        from .csvio import format_value

        lines = ["L,rho,empirical_p,bound_p,samples"]
        for row in self.rows():
            lines.append(",".join(format_value(v) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv_text(cls, text: str) -> "SparsityReport":
        lines = [ln for ln in text.splitlines() if ln]
        if not lines or lines[0] != "L,rho,empirical_p,bound_p,samples":
            raise InvalidInputError("bad sparsity CSV header")
        report = cls()
        for ln in lines[1:]:
            L, rho, emp, bound, samples = ln.split(",")
            report.add(
                int(L),
                float(rho),
                SparsityCell(float(emp), float(bound), int(samples)),
            )
        return report


def sparsity_profile(
    source: LogitSource,
    L_list,
    rho_list,
    trials: int,
    rng: RngStream,
) -> SparsityReport:
    """Empirical P_sparse and its lower bound on the (L, rho) grid.

    Grid cells with rho <= 1/L fall outside the sparse-rate domain and are
    skipped.
    """
    report = SparsityReport()
    for li, L in enumerate(L_list):
        L = int(L)
        cell_rng = rng.child(1000 + li)
        rows = sample_weight_rows(source, L, trials, cell_rng.child(0))
        for ri, rho in enumerate(rho_list):
            if not (1.0 / L < rho <= 1.0):
                continue
            emp = empirical_p_sparse(rows, rho)
            detail = p_sparse_lower_bound_detail(
                source, L, rho, None, max(trials, 10_000), cell_rng.child(1 + ri)
            )
            report.add(L, rho, SparsityCell(emp, detail.bound, trials))
    return report
