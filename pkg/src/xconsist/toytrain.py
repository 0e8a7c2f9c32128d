"""Desk-scale consistency-based training on synthetic two-task data.

A tiny two-headed scorer (shared concept embedding, one linear head per
task) is trained by plain gradient descent.  Each step is either a
standard cross-entropy update or, with the configured probability, a
rank-alignment update: per-candidate cross-entropy losses for the anchor
and one evaluation task are soft-ranked and pulled together by the
consistency loss, weighted into the total objective.

All gradients are analytic; every step draws from its own RNG substream
keyed by (seed, step), so runs are bit-deterministic per configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .core import (
    ContrastEntry,
    ContrastLoglik,
    ContrastSample,
    EvaluationBundle,
    LikelihoodRecord,
    PerturbationMode,
    build_bundle,
)
from .softrank import RankDirection, SoftRankConfig, combined_loss, consistency_loss

DEFAULT_TASKS = ("anchor", "eval")


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, loss: float):
        self.step = step
        super().__init__(f"training loss became non-finite at step {step} ({loss!r})")


class _NonFiniteLoss(ArithmeticError):
    """Internal sentinel: a step produced a non-finite loss value."""

    def __init__(self, value: float):
        self.value = value
        super().__init__(repr(value))


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of the training loop.

    consistency_ratio is the fraction of steps taking the rank-alignment
    branch; consistency_weight scales the alignment loss inside the total.
    """

    consistency_ratio: float = 0.5
    consistency_weight: float = 0.25
    rank_epsilon: float = 1.0
    lr: float = 1e-2
    steps: int = 20_000
    k_contrasts: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.consistency_ratio <= 1.0):
            raise ValueError(f"consistency_ratio must lie in [0, 1], got {self.consistency_ratio}")
        if self.consistency_weight < 0:
            raise ValueError(f"consistency_weight must be >= 0, got {self.consistency_weight}")
        if self.rank_epsilon <= 0:
            raise ValueError(f"rank_epsilon must be positive, got {self.rank_epsilon}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.k_contrasts < 2:
            raise ValueError(f"k_contrasts must be >= 2, got {self.k_contrasts}")


@dataclass(frozen=True, eq=False)
class ToyInstance:
    gold: int
    contrasts: tuple[int, ...]
    features: np.ndarray  # (vocab_size,), noisy one-hot observation
    ce_task: int = 0  # which task's pretraining corpus this instance belongs to


@dataclass(frozen=True)
class SyntheticDataset:
    """Paired multi-task instances over one latent concept vocabulary.

    Every task observes the same noisy features of the same latent gold
    concept, but names concepts in its own label space: ``label_maps[t]``
    is the fixed bijection from concept index to task t's label index
    (task 0, the anchor, uses the identity).
    """

    instances: tuple[ToyInstance, ...]
    vocab_size: int
    noise: float
    seed: int
    label_maps: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.instances)


def make_synthetic_dataset(
    n: int,
    vocab_size: int,
    noise: float,
    seed: int,
    k_contrasts: int = 4,
    n_tasks: int = 2,
    label_maps: tuple[tuple[int, ...], ...] | None = None,
) -> SyntheticDataset:
    """Instances with one latent gold concept observed through noisy features.

    All tasks share the latent concept and the observation; the contrast
    concepts are distinct non-gold draws.  Pass ``label_maps`` to reuse the
    task label spaces of another split (they define the tasks themselves).
    """
    if k_contrasts >= vocab_size:
        raise ValueError(
            f"vocab_size ({vocab_size}) must exceed k_contrasts ({k_contrasts})"
        )
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n_tasks < 2:
        raise ValueError(f"n_tasks must be >= 2, got {n_tasks}")
    rng = np.random.default_rng(seed)
    if label_maps is None:
        maps = [tuple(range(vocab_size))]
        for _ in range(n_tasks - 1):
            maps.append(tuple(int(v) for v in rng.permutation(vocab_size)))
        label_maps = tuple(maps)
    else:
        if len(label_maps) != n_tasks:
            raise ValueError(
                f"label_maps declares {len(label_maps)} tasks, expected {n_tasks}"
            )
        # Keep RNG consumption identical whether maps are supplied or not,
        # so splits built with the same seed stay comparable.
        for _ in range(n_tasks - 1):
            rng.permutation(vocab_size)
    instances = []
    for i in range(n):
        gold = int(rng.integers(vocab_size))
        others = np.delete(np.arange(vocab_size), gold)
        contrasts = tuple(int(c) for c in rng.choice(others, size=k_contrasts, replace=False))
        features = np.zeros(vocab_size)
        features[gold] = 1.0
        features += noise * rng.standard_normal(vocab_size)
        # Round-robin corpus assignment: each task pretrains on its own slice.
        instances.append(ToyInstance(
            gold=gold, contrasts=contrasts, features=features, ce_task=i % n_tasks,
        ))
    return SyntheticDataset(
        instances=tuple(instances), vocab_size=vocab_size, noise=noise, seed=seed,
        label_maps=tuple(label_maps),
    )


@dataclass(eq=False)
class ToyModel:
    """Shared embedding plus one scoring head per task; heads[0] is the anchor.

    Parameter arrays are updated in place by :func:`train`.
    """

    embed: np.ndarray  # (vocab_size, dim)
    heads: tuple[np.ndarray, ...]  # each (dim, vocab_size)
    task_names: tuple[str, ...] = DEFAULT_TASKS

    def __post_init__(self) -> None:
        if len(self.heads) != len(self.task_names):
            raise ValueError("one head per task name required")
        if len(self.heads) < 2:
            raise ValueError("need an anchor head and at least one evaluation head")

    def copy(self) -> "ToyModel":
        return ToyModel(
            embed=self.embed.copy(),
            heads=tuple(h.copy() for h in self.heads),
            task_names=self.task_names,
        )

    def log_softmax(self, features: np.ndarray, head_index: int) -> np.ndarray:
        logits = (features @ self.embed) @ self.heads[head_index]
        return logits - _logsumexp(logits)


def init_model(
    vocab_size: int,
    dim: int,
    seed: int,
    task_names: tuple[str, ...] = DEFAULT_TASKS,
    head_scale: float = 1.0,
    embed_scale: float = 2.0,
) -> ToyModel:
    """Random init.

    ``head_scale`` controls how far apart the task heads start;
    ``embed_scale`` sets the initial logit spread (kept well above the
    soft-rank regularization so candidate rankings are sharp from step 0).
    """
    rng = np.random.default_rng(seed)
    embed = embed_scale * rng.standard_normal((vocab_size, dim)) / math.sqrt(vocab_size)
    heads = tuple(
        head_scale * rng.standard_normal((dim, vocab_size)) / math.sqrt(dim)
        for _ in task_names
    )
    return ToyModel(embed=embed, heads=heads, task_names=task_names)


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + math.log(float(np.sum(np.exp(x - m))))


def _candidate_ce(log_probs: np.ndarray, candidates: tuple[int, ...]) -> np.ndarray:
    return -log_probs[list(candidates)]


@dataclass(frozen=True, slots=True)
class StepLog:
    step: int
    branch: str  # "consistency" or "ce"
    ce_loss: float
    const_loss: float | None
    total: float


def step_log_csv_lines(rows: Iterable[StepLog]) -> list[str]:
    lines = ["step,branch,ce_loss,const_loss,total"]
    for r in rows:
        const = "" if r.const_loss is None else repr(r.const_loss)
        lines.append(f"{r.step},{r.branch},{r.ce_loss!r},{const},{r.total!r}")
    return lines


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def ce_step(
    model: ToyModel,
    inst: ToyInstance,
    label_maps: tuple[tuple[int, ...], ...],
) -> tuple[float, np.ndarray, dict[int, np.ndarray]]:
    """Standard pretraining update: gold cross-entropy on the instance's own task."""
    x = inst.features
    h = x @ model.embed
    t = inst.ce_task
    gold_label = label_maps[t][inst.gold]
    logits = h @ model.heads[t]
    loss = _logsumexp(logits) - float(logits[gold_label])
    dlogits = _softmax(logits)
    dlogits[gold_label] -= 1.0
    grad_head = np.outer(h, dlogits)
    grad_embed = np.outer(x, model.heads[t] @ dlogits)
    return loss, grad_embed, {t: grad_head}


def consistency_step(
    model: ToyModel,
    inst: ToyInstance,
    eval_index: int,
    config: TrainConfig,
    label_maps: tuple[tuple[int, ...], ...],
) -> tuple[float, float, float | None, np.ndarray, dict[int, np.ndarray]]:
    """Loss and analytic gradients of the rank-alignment update.

    Returns (total, ce_loss, const_loss, grad_embed, {head_index: grad}).
    The cross-entropy part is exactly the standard pretraining loss of the
    instance; the alignment part soft-ranks the anchor's and the chosen
    evaluation task's candidate cross-entropy vectors (losses rank
    ascending: low loss, low rank) and pulls them together.  At weight 0
    the update coincides bit-for-bit with :func:`ce_step`.
    """
    concepts = (inst.gold,) + inst.contrasts
    x = inst.features
    h = x @ model.embed
    rank_cfg = SoftRankConfig(
        epsilon=config.rank_epsilon, direction=RankDirection.HIGHER_SCORE_HIGHER_RANK
    )

    ce_loss, grad_embed, grad_heads = ce_step(model, inst, label_maps)
    if config.consistency_weight == 0.0:
        return ce_loss, ce_loss, None, grad_embed, grad_heads

    involved = (0, eval_index)
    labels = {t: tuple(label_maps[t][c] for c in concepts) for t in involved}
    logits = {t: h @ model.heads[t] for t in involved}
    probs = {t: _softmax(logits[t]) for t in involved}
    ce = {
        t: _candidate_ce(logits[t] - _logsumexp(logits[t]), labels[t])
        for t in involved
    }
    for t in involved:
        if not np.all(np.isfinite(ce[t])):
            raise _NonFiniteLoss(float(np.sum(ce[t])))

    const_loss, (g_anchor, g_eval) = consistency_loss(ce[0], ce[eval_index], rank_cfg)
    if not math.isfinite(const_loss):
        raise _NonFiniteLoss(const_loss)
    total = combined_loss(ce_loss, const_loss, config.consistency_weight)

    coeff = {0: config.consistency_weight * g_anchor,
             eval_index: config.consistency_weight * g_eval}
    grad_h = np.zeros_like(h)
    for t in involved:
        # d ce_j / d logits = softmax - onehot(label_j)
        dlogits = float(np.sum(coeff[t])) * probs[t]
        np.add.at(dlogits, list(labels[t]), -coeff[t])
        grad_heads[t] = grad_heads.get(t, 0.0) + np.outer(h, dlogits)
        grad_h += model.heads[t] @ dlogits
    grad_embed = grad_embed + np.outer(x, grad_h)
    return total, ce_loss, const_loss, grad_embed, grad_heads


@dataclass(frozen=True)
class TrainResult:
    model: ToyModel
    log: tuple[StepLog, ...]


def train(model: ToyModel, dataset: SyntheticDataset, config: TrainConfig) -> TrainResult:
    """Gradient descent per the branching schedule; aborts on non-finite loss."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    n_heads = len(model.heads)
    if len(dataset.label_maps) != n_heads:
        raise ValueError(
            f"dataset declares {len(dataset.label_maps)} tasks, model has {n_heads} heads"
        )
    out = model.copy()
    log: list[StepLog] = []
    for step in range(config.steps):
        rng = np.random.default_rng((config.seed, step))
        r = float(rng.random())
        inst = dataset.instances[step % len(dataset)]
        try:
            if r < config.consistency_ratio:
                eval_index = 1 if n_heads == 2 else int(rng.integers(1, n_heads))
                total, ce_loss, const_loss, g_embed, g_heads = consistency_step(
                    out, inst, eval_index, config, dataset.label_maps
                )
                branch = "consistency"
                row = StepLog(step, branch, ce_loss, const_loss, total)
            else:
                total, g_embed, g_heads = ce_step(out, inst, dataset.label_maps)
                row = StepLog(step, "ce", total, None, total)
        except _NonFiniteLoss as exc:
            raise TrainingDivergedError(step, exc.value) from None
        if not math.isfinite(total):
            raise TrainingDivergedError(step, total)
        np.subtract(out.embed, config.lr * g_embed, out=out.embed)
        for t, g in g_heads.items():
            np.subtract(out.heads[t], config.lr * g, out=out.heads[t])
        log.append(row)
    return TrainResult(model=out, log=tuple(log))


# ---------------------------------------------------------------------------
# Export to the evaluation wire format


def _toy_sample(index: int, inst: ToyInstance) -> ContrastSample:
    token = f"concept-{inst.gold:03d}"
    caption = f"a synthetic scene depicting {token}"
    start = caption.index(token)
    return ContrastSample(
        sample_id=f"t{index:05d}",
        image_id=f"img{index:05d}",
        caption=caption,
        concept_span=(start, start + len(token)),
        category="misc",
        contrasts=tuple(
            ContrastEntry(contrast_id=f"c{j + 1}", replacement=f"concept-{c:03d}")
            for j, c in enumerate(inst.contrasts)
        ),
    )


def export_eval_bundle(model: ToyModel, dataset: SyntheticDataset) -> EvaluationBundle:
    """Gold/contrast log-likelihoods per task in the shared record format."""
    if len(dataset.label_maps) != len(model.heads):
        raise ValueError(
            f"dataset declares {len(dataset.label_maps)} tasks, "
            f"model has {len(model.heads)} heads"
        )
    samples = []
    records = []
    for i, inst in enumerate(dataset.instances):
        sample = _toy_sample(i, inst)
        samples.append(sample)
        for t, task_name in enumerate(model.task_names):
            label_map = dataset.label_maps[t]
            log_probs = model.log_softmax(inst.features, t)
            records.append(LikelihoodRecord(
                sample_id=sample.sample_id,
                task=task_name,
                mode=PerturbationMode.CONTRAST_OUTPUT,
                gold_loglik=float(log_probs[label_map[inst.gold]]),
                contrasts=tuple(
                    ContrastLoglik(
                        contrast_id=f"c{j + 1}", loglik=float(log_probs[label_map[c]])
                    )
                    for j, c in enumerate(inst.contrasts)
                ),
            ))
    return build_bundle(samples, records, anchor=model.task_names[0])


# ---------------------------------------------------------------------------
# Paired-arm experiment (treated vs. no-consistency baseline)


@dataclass(frozen=True)
class ToyRunConfig:
    """One self-contained experiment: data, model shape, and training knobs."""

    n: int = 2000
    n_test: int = 5000
    vocab_size: int = 50
    noise: float = 0.5
    embed_dim: int = 50
    head_scale: float = 1.0
    embed_scale: float = 2.0
    train: TrainConfig = TrainConfig()

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ToyRunConfig":
        train_keys = {
            "consistency_ratio", "consistency_weight", "rank_epsilon",
            "lr", "steps", "k_contrasts", "seed",
        }
        run_keys = {
            "n", "n_test", "vocab_size", "noise", "embed_dim",
            "head_scale", "embed_scale",
        }
        unknown = set(obj) - train_keys - run_keys
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        train = TrainConfig(**{k: obj[k] for k in train_keys if k in obj})
        return cls(**{k: obj[k] for k in run_keys if k in obj}, train=train)


@dataclass(frozen=True)
class ArmOutcome:
    consistency_weight: float
    c1: float
    preference_accuracy: float  # mean over the two task heads at k = 1
    rho: float


def _measure(bundle: EvaluationBundle, task_names: tuple[str, ...]) -> ArmOutcome:
    from . import metrics

    anchor, eval_task = task_names[0], task_names[1]
    c1 = metrics.consistency_at_k(bundle, anchor, eval_task, 1)
    pref_anchor = metrics.preference_accuracy_at_k(bundle, anchor, 1, anchor=anchor)
    pref_eval = metrics.preference_accuracy_at_k(bundle, eval_task, 1, anchor=anchor)
    rho = metrics.rho_rank(bundle, anchor, eval_task)
    return ArmOutcome(
        consistency_weight=float("nan"),
        c1=c1.value,
        preference_accuracy=(pref_anchor.value + pref_eval.value) / 2,
        rho=rho,
    )


@dataclass(frozen=True)
class ArmResult:
    train_result: TrainResult
    outcome: ArmOutcome
    eval_bundle: EvaluationBundle  # held-out records in the wire format


def run_arm(run_cfg: ToyRunConfig) -> ArmResult:
    """Train one arm and measure it on a held-out set with the metrics engine."""
    seed = run_cfg.train.seed
    train_set = make_synthetic_dataset(
        run_cfg.n, run_cfg.vocab_size, run_cfg.noise, seed=seed,
        k_contrasts=run_cfg.train.k_contrasts,
    )
    test_set = make_synthetic_dataset(
        run_cfg.n_test, run_cfg.vocab_size, run_cfg.noise, seed=seed + 1,
        k_contrasts=run_cfg.train.k_contrasts, label_maps=train_set.label_maps,
    )
    model = init_model(
        run_cfg.vocab_size, run_cfg.embed_dim, seed=seed + 2,
        head_scale=run_cfg.head_scale, embed_scale=run_cfg.embed_scale,
    )
    result = train(model, train_set, run_cfg.train)
    bundle = export_eval_bundle(result.model, test_set)
    outcome = replace(
        _measure(bundle, result.model.task_names),
        consistency_weight=run_cfg.train.consistency_weight,
    )
    return ArmResult(train_result=result, outcome=outcome, eval_bundle=bundle)


def run_paired_arms(run_cfg: ToyRunConfig) -> tuple[ArmResult, ArmResult]:
    """The configured arm plus its consistency_weight = 0 twin, same seed."""
    baseline_cfg = replace(run_cfg, train=replace(run_cfg.train, consistency_weight=0.0))
    return run_arm(run_cfg), run_arm(baseline_cfg)
