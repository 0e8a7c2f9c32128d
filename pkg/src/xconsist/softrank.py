"""Differentiable soft ranking and the rank-alignment consistency loss.

Soft ranks are defined as the Euclidean projection of the (scaled, signed)
score vector onto the permutahedron generated by (1, 2, ..., n).  The
projection is computed by sorting followed by isotonic regression with
pool-adjacent-violators, which also yields the block structure needed for
the analytic Jacobian.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class RankDirection(enum.Enum):
    """Which end of the rank scale a high score maps to.

    HIGHER_SCORE_LOWER_RANK: rank 1 is the highest-scoring entry (use when
    scores are log-likelihoods).  HIGHER_SCORE_HIGHER_RANK: rank 1 is the
    lowest-scoring entry (use when scores are losses).
    """

    HIGHER_SCORE_LOWER_RANK = "higher_score_lower_rank"
    HIGHER_SCORE_HIGHER_RANK = "higher_score_higher_rank"


@dataclass(frozen=True)
class SoftRankConfig:
    """Parameters of the regularized ranking operator.

    Small ``epsilon`` approaches hard ranks (ties averaged); large
    ``epsilon`` flattens every rank towards (n + 1) / 2.
    """

    epsilon: float = 1.0
    direction: RankDirection = RankDirection.HIGHER_SCORE_LOWER_RANK

    def __post_init__(self) -> None:
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be a positive real, got {self.epsilon!r}")


@dataclass(frozen=True)
class RankJacobian:
    """Derivative of soft ranks with respect to scores.

    In sorted coordinates the Jacobian is ``scale * (I - B)`` where ``B``
    averages within each isotonic block; ``permutation[k]`` is the input
    index occupying sorted slot ``k``.  The matrix is symmetric, so matvec
    doubles as the transposed product.
    """

    permutation: np.ndarray
    blocks: tuple[tuple[int, int], ...]
    scale: float

    @property
    def n(self) -> int:
        return int(self.permutation.shape[0])

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {vec.shape}")
        v_sorted = vec[self.permutation]
        out = v_sorted.copy()
        for start, stop in self.blocks:
            out[start:stop] -= v_sorted[start:stop].mean()
        result = np.empty_like(out)
        result[self.permutation] = out
        return self.scale * result

    def as_matrix(self) -> np.ndarray:
        n = self.n
        core = np.eye(n)
        for start, stop in self.blocks:
            core[start:stop, start:stop] -= 1.0 / (stop - start)
        mat = np.zeros((n, n))
        mat[np.ix_(self.permutation, self.permutation)] = core
        return self.scale * mat


def _pav_non_increasing(y: np.ndarray) -> tuple[np.ndarray, tuple[tuple[int, int], ...]]:
    """L2 fit of a non-increasing sequence to ``y`` by pool-adjacent-violators.

    Returns the fitted values and the block partition as half-open
    ``(start, stop)`` pairs.  Adjacent blocks with equal pooled means are
    merged, which pins the derivative convention at degenerate inputs.
    """
    n = y.shape[0]
    means = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    starts = np.empty(n, dtype=np.int64)
    top = 0
    for i in range(n):
        means[top] = y[i]
        counts[top] = 1
        starts[top] = i
        top += 1
        while top > 1 and means[top - 2] <= means[top - 1]:
            total = counts[top - 2] + counts[top - 1]
            means[top - 2] = (
                means[top - 2] * counts[top - 2] + means[top - 1] * counts[top - 1]
            ) / total
            counts[top - 2] = total
            top -= 1
    fitted = np.empty(n)
    blocks: list[tuple[int, int]] = []
    for b in range(top):
        start = int(starts[b])
        stop = start + int(counts[b])
        fitted[start:stop] = means[b]
        blocks.append((start, stop))
    return fitted, tuple(blocks)


def _as_score_vector(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"scores must be a 1-d vector, got shape {s.shape}")
    if s.shape[0] == 0:
        raise ValueError("scores must be non-empty")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s


def _scale_for(config: SoftRankConfig) -> float:
    # Rank 1 must attract the highest score under HIGHER_SCORE_LOWER_RANK,
    # which means projecting the negated scaled scores.
    if config.direction is RankDirection.HIGHER_SCORE_LOWER_RANK:
        return -1.0 / config.epsilon
    return 1.0 / config.epsilon


def _project_with_blocks(
    scores: np.ndarray, config: SoftRankConfig
) -> tuple[np.ndarray, RankJacobian]:
    scale = _scale_for(config)
    z = scale * scores
    n = z.shape[0]
    order = np.argsort(-z, kind="stable")
    weights = np.arange(n, 0, -1, dtype=np.float64)
    fitted, blocks = _pav_non_increasing(z[order] - weights)
    ranks_sorted = z[order] - fitted
    ranks = np.empty(n)
    ranks[order] = ranks_sorted
    return ranks, RankJacobian(permutation=order, blocks=blocks, scale=scale)


def soft_rank(scores, config: SoftRankConfig = SoftRankConfig()) -> np.ndarray:
    """Regularized ranks of ``scores``: entries lie in [1, n], sum to n(n+1)/2."""
    s = _as_score_vector(scores)
    ranks, _ = _project_with_blocks(s, config)
    return ranks


def soft_rank_jacobian(scores, config: SoftRankConfig = SoftRankConfig()) -> RankJacobian:
    """Analytic Jacobian of :func:`soft_rank` at ``scores``."""
    s = _as_score_vector(scores)
    _, jac = _project_with_blocks(s, config)
    return jac


def consistency_loss(
    scores_anchor,
    scores_eval,
    config: SoftRankConfig = SoftRankConfig(),
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Half squared distance between the two soft-rank vectors, with gradients.

    Both vectors must score the same candidates position-by-position.
    Returns ``(loss, (grad_anchor, grad_eval))`` where the gradients are the
    chain-rule products through each side's rank Jacobian.
    """
    a = _as_score_vector(scores_anchor)
    e = _as_score_vector(scores_eval)
    if a.shape != e.shape:
        raise ValueError(f"score vectors must have equal length, got {a.shape[0]} and {e.shape[0]}")
    if a.shape[0] < 2:
        raise ValueError("rank alignment needs at least two candidates")
    ranks_a, jac_a = _project_with_blocks(a, config)
    ranks_e, jac_e = _project_with_blocks(e, config)
    diff = ranks_a - ranks_e
    loss = 0.5 * float(diff @ diff)
    return loss, (jac_a.matvec(diff), -jac_e.matvec(diff))


def combined_loss(ce_loss: float, const_loss: float, weight: float) -> float:
    """Total training objective: ``weight * const_loss + ce_loss``."""
    for name, val in (("ce_loss", ce_loss), ("const_loss", const_loss), ("weight", weight)):
        if not np.isfinite(val):
            raise ValueError(f"{name} must be finite, got {val!r}")
    if weight < 0:
        raise ValueError(f"weight must be nonnegative, got {weight}")
    return weight * const_loss + ce_loss
