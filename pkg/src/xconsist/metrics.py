"""Cross-task consistency metrics over an evaluation bundle.

The consistency decision for one contrast candidate is: the pair of tasks
is consistent iff both prefer the gold output over the candidate, or both
prefer the candidate (strict inequalities; an exact tie counts as not
preferring gold on that side).  Difficulty k orders a sample's candidates
by the anchor task's contrast log-likelihoods, hardest first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .core import EvaluationBundle, LikelihoodRecord, PerturbationMode


class EmptyEvaluationError(ValueError):
    """No sample satisfies the eligibility rule of the requested metric."""


@dataclass(frozen=True, slots=True)
class PairwiseJudgement:
    sample_id: str
    k: int
    consistent: bool
    anchor_prefers_gold: bool
    eval_prefers_gold: bool


class MetricAtK(NamedTuple):
    """A fraction plus the count of samples it was computed over.

    ``value`` is None when no sample is eligible (explicitly empty, not 0).
    """

    value: float | None
    n: int


def rank_contrasts_by_difficulty(anchor_record: LikelihoodRecord) -> list[str]:
    """Contrast ids sorted hardest-first: descending loglik, ties by id."""
    if not anchor_record.contrasts:
        raise ValueError(
            f"record ({anchor_record.sample_id!r}, {anchor_record.task!r}) has no contrasts"
        )
    return [
        c.contrast_id
        for c in sorted(anchor_record.contrasts, key=lambda c: (-c.loglik, c.contrast_id))
    ]


def _prefers_gold(record: LikelihoodRecord, contrast_id: str) -> bool:
    return record.gold_loglik > record.loglik_of(contrast_id)


def judge_pair(
    anchor: LikelihoodRecord, eval_record: LikelihoodRecord, contrast_id: str
) -> PairwiseJudgement:
    """Consistency decision for one shared contrast candidate.

    ``k`` is the candidate's 1-based difficulty position within the anchor
    record's own contrast list.
    """
    a = _prefers_gold(anchor, contrast_id)
    e = _prefers_gold(eval_record, contrast_id)
    k = rank_contrasts_by_difficulty(anchor).index(contrast_id) + 1
    return PairwiseJudgement(
        sample_id=anchor.sample_id,
        k=k,
        consistent=(a == e),
        anchor_prefers_gold=a,
        eval_prefers_gold=e,
    )


@dataclass(frozen=True, slots=True)
class _PairRow:
    sample_id: str
    anchor_record: LikelihoodRecord
    eval_record: LikelihoodRecord
    shared: tuple[str, ...]  # shared contrast ids in anchor difficulty order


def _pair_rows(
    bundle: EvaluationBundle, anchor: str, eval_task: str
) -> tuple[list[_PairRow], int]:
    """Per-sample shared contrasts for a task pair, plus the skipped count.

    Skipped counts samples that have an anchor record but no record for the
    evaluation task (e.g. localization annotated on a subset only).
    """
    anchor_ref = bundle.task(anchor)
    bundle.task(eval_task)
    if anchor_ref.perturbation_mode is not PerturbationMode.CONTRAST_OUTPUT:
        raise ValueError(f"anchor task {anchor!r} must use contrast_output mode")
    rows: list[_PairRow] = []
    skipped = 0
    for sample_id in sorted(bundle.samples):
        a = bundle.records.get((sample_id, anchor))
        if a is None:
            continue
        e = bundle.records.get((sample_id, eval_task))
        if e is None:
            skipped += 1
            continue
        if not a.contrasts:
            continue
        eval_ids = set(e.contrast_ids)
        shared = tuple(
            cid for cid in rank_contrasts_by_difficulty(a) if cid in eval_ids
        )
        rows.append(_PairRow(sample_id, a, e, shared))
    return rows, skipped


def consistency_at_k(
    bundle: EvaluationBundle, anchor: str, eval_task: str, k: int
) -> MetricAtK:
    """Fraction of eligible samples consistent at difficulty ``k``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rows, _ = _pair_rows(bundle, anchor, eval_task)
    hits = 0
    n = 0
    for row in rows:
        if len(row.shared) < k:
            continue
        cid = row.shared[k - 1]
        n += 1
        if _prefers_gold(row.anchor_record, cid) == _prefers_gold(row.eval_record, cid):
            hits += 1
    if n == 0:
        return MetricAtK(value=None, n=0)
    return MetricAtK(value=hits / n, n=n)


def preference_accuracy_at_k(
    bundle: EvaluationBundle, task: str, k: int, anchor: str | None = None
) -> MetricAtK:
    """Fraction of eligible samples where ``task`` scores gold above the k-th contrast.

    Difficulty order comes from the anchor task; when ``anchor`` is None the
    bundle's designated anchor is used.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if anchor is None:
        anchor_ref = bundle.anchor
        if anchor_ref is None:
            raise ValueError("bundle has no designated anchor task; pass anchor= explicitly")
        anchor = anchor_ref.name
    rows, _ = _pair_rows(bundle, anchor, task)
    hits = 0
    n = 0
    for row in rows:
        if len(row.shared) < k:
            continue
        n += 1
        if _prefers_gold(row.eval_record, row.shared[k - 1]):
            hits += 1
    if n == 0:
        return MetricAtK(value=None, n=0)
    return MetricAtK(value=hits / n, n=n)


# ---------------------------------------------------------------------------
# Spearman rank correlation


def _average_ranks_desc(values: list[float]) -> tuple[list[float], bool]:
    """1-based ranks, largest value first; tied values share the average rank.

    Also reports whether any tie occurred.
    """
    n = len(values)
    order = sorted(range(n), key=lambda i: (-values[i], i))
    ranks = [0.0] * n
    had_ties = False
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        if j > i:
            had_ties = True
        avg = (i + j) / 2 + 1
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks, had_ties


def _spearman(ranks_a: list[float], ranks_b: list[float],
              tie_free: bool) -> float | None:
    """Spearman correlation of two rank vectors; None when degenerate.

    Tie-free rank vectors use the exact closed form 1 - 6*sum(d^2)/(n(n^2-1));
    with ties, the Pearson correlation of the rank vectors.
    """
    n = len(ranks_a)
    if tie_free:
        sd2 = sum((a - b) * (a - b) for a, b in zip(ranks_a, ranks_b))
        return 1.0 - 6.0 * sd2 / (n * (n * n - 1))
    mean_a = sum(ranks_a) / n
    mean_b = sum(ranks_b) / n
    da = [a - mean_a for a in ranks_a]
    db = [b - mean_b for b in ranks_b]
    var_a = sum(x * x for x in da)
    var_b = sum(x * x for x in db)
    if var_a == 0.0 or var_b == 0.0:
        return None
    return sum(x * y for x, y in zip(da, db)) / math.sqrt(var_a * var_b)


def _sample_rank_vectors(row: _PairRow) -> tuple[list[float], list[float], bool]:
    va = [row.anchor_record.loglik_of(cid) for cid in row.shared]
    ve = [row.eval_record.loglik_of(cid) for cid in row.shared]
    ra, ties_a = _average_ranks_desc(va)
    re, ties_e = _average_ranks_desc(ve)
    return ra, re, not (ties_a or ties_e)


def rho_rank(
    bundle: EvaluationBundle, anchor: str, eval_task: str, aggregate: str = "mean"
) -> float:
    """Spearman correlation between the two tasks' contrast rankings.

    ``aggregate="mean"`` averages the per-sample coefficient over samples
    with at least two shared contrasts (samples where either side ranks all
    candidates identically are degenerate and skipped).  ``"pooled"``
    computes one coefficient over all per-sample rank pairs concatenated;
    this variant is exposed for comparison only.
    """
    if aggregate not in ("mean", "pooled"):
        raise ValueError(f"aggregate must be 'mean' or 'pooled', got {aggregate!r}")
    rows, _ = _pair_rows(bundle, anchor, eval_task)
    eligible = [r for r in rows if len(r.shared) >= 2]
    if not eligible:
        raise EmptyEvaluationError(
            f"no sample shares >= 2 contrasts between {anchor!r} and {eval_task!r}"
        )
    if aggregate == "pooled":
        pooled_a: list[float] = []
        pooled_b: list[float] = []
        for row in eligible:
            ra, re, _ = _sample_rank_vectors(row)
            pooled_a.extend(ra)
            pooled_b.extend(re)
        val = _spearman(pooled_a, pooled_b, tie_free=False)
        if val is None:
            raise EmptyEvaluationError("pooled rank vectors are degenerate (zero variance)")
        return val
    vals: list[float] = []
    for row in eligible:
        ra, re, tie_free = _sample_rank_vectors(row)
        val = _spearman(ra, re, tie_free)
        if val is not None:
            vals.append(val)
    if not vals:
        raise EmptyEvaluationError("every eligible sample has a degenerate (all-tied) ranking")
    return sum(vals) / len(vals)


# ---------------------------------------------------------------------------
# Report assembly


@dataclass(frozen=True)
class ConsistencyReport:
    """All pairwise metrics for one anchor/evaluation task pair.

    Maps are keyed by k; ``consistency_at_k`` and ``preference_accuracy_at_k``
    omit k values with no eligible samples.  ``ties`` counts judgements where
    gold and contrast logliks were exactly equal on either side.
    """

    anchor: str
    evaluation: str
    n_samples_at_k: dict[int, int]
    consistency_at_k: dict[int, float]
    rho_rank: float | None
    preference_accuracy_at_k: dict[int, float]
    skipped: int
    ties: int = 0

    def to_json_dict(self) -> dict:
        return {
            "anchor": self.anchor,
            "evaluation": self.evaluation,
            "n_samples_at_k": {str(k): v for k, v in self.n_samples_at_k.items()},
            "consistency_at_k": {str(k): v for k, v in self.consistency_at_k.items()},
            "rho_rank": self.rho_rank,
            "preference_accuracy_at_k": {
                str(k): v for k, v in self.preference_accuracy_at_k.items()
            },
            "skipped": self.skipped,
            "ties": self.ties,
        }

    def to_csv_rows(self) -> list[tuple]:
        rows = [("k", "n", "consistency", "preference_accuracy")]
        for k in sorted(self.n_samples_at_k):
            rows.append((
                k,
                self.n_samples_at_k[k],
                self.consistency_at_k.get(k, ""),
                self.preference_accuracy_at_k.get(k, ""),
            ))
        return rows


def build_report(
    bundle: EvaluationBundle, anchor: str, eval_task: str, k_max: int
) -> ConsistencyReport:
    """Assemble C_k, preference accuracy, and rho_rank for k = 1..k_max."""
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    rows, skipped = _pair_rows(bundle, anchor, eval_task)

    n_at_k: dict[int, int] = {}
    c_at_k: dict[int, float] = {}
    p_at_k: dict[int, float] = {}
    ties = 0
    for k in range(1, k_max + 1):
        hits = 0
        pref_hits = 0
        n = 0
        for row in rows:
            if len(row.shared) < k:
                continue
            cid = row.shared[k - 1]
            n += 1
            a = _prefers_gold(row.anchor_record, cid)
            e = _prefers_gold(row.eval_record, cid)
            if a == e:
                hits += 1
            if e:
                pref_hits += 1
            if (row.anchor_record.gold_loglik == row.anchor_record.loglik_of(cid)
                    or row.eval_record.gold_loglik == row.eval_record.loglik_of(cid)):
                ties += 1
        n_at_k[k] = n
        if n:
            c_at_k[k] = hits / n
            p_at_k[k] = pref_hits / n

    try:
        rho = rho_rank(bundle, anchor, eval_task)
    except EmptyEvaluationError:
        rho = None

    return ConsistencyReport(
        anchor=anchor,
        evaluation=eval_task,
        n_samples_at_k=n_at_k,
        consistency_at_k=c_at_k,
        rho_rank=rho,
        preference_accuracy_at_k=p_at_k,
        skipped=skipped,
        ties=ties,
    )
