"""Domain types, validation, and the jsonl wire formats shared by every module.

All types are immutable after construction.  Parsing is total: every
malformed input line or invariant violation is collected as a diagnostic
and reported together; a partially valid bundle is never returned.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

CATEGORIES = (
    "object",
    "attribute",
    "food",
    "animal",
    "location",
    "role",
    "action",
    "person",
    "ocr",
    "misc",
)


class PerturbationMode(enum.Enum):
    CONTRAST_OUTPUT = "contrast_output"
    CONTRAST_INPUT = "contrast_input"


@dataclass(frozen=True, slots=True)
class TaskRef:
    name: str
    perturbation_mode: PerturbationMode
    is_anchor: bool = False


@dataclass(frozen=True, slots=True)
class VqaAnnotation:
    question: str
    answer: str


@dataclass(frozen=True, slots=True)
class LocalizationAnnotation:
    query: str
    boxes: tuple[tuple[float, float, float, float], ...]


@dataclass(frozen=True, slots=True)
class ContrastEntry:
    contrast_id: str
    replacement: str


@dataclass(frozen=True, slots=True)
class ContrastSample:
    """One pivot instance plus its enumerated meaning-altering replacements."""

    sample_id: str
    image_id: str
    caption: str
    concept_span: tuple[int, int]
    category: str
    contrasts: tuple[ContrastEntry, ...]
    vqa: VqaAnnotation | None = None
    localization: LocalizationAnnotation | None = None
    generation_prompt: str | None = None

    @property
    def concept_text(self) -> str:
        start, end = self.concept_span
        return self.caption[start:end]

    @property
    def contrast_ids(self) -> tuple[str, ...]:
        return tuple(c.contrast_id for c in self.contrasts)


@dataclass(frozen=True, slots=True)
class ContrastLoglik:
    contrast_id: str
    loglik: float


@dataclass(frozen=True, slots=True)
class LikelihoodRecord:
    """Gold and contrast-candidate log-likelihoods for one sample under one task."""

    sample_id: str
    task: str
    mode: PerturbationMode
    gold_loglik: float
    contrasts: tuple[ContrastLoglik, ...]

    @property
    def contrast_ids(self) -> tuple[str, ...]:
        return tuple(c.contrast_id for c in self.contrasts)

    def loglik_of(self, contrast_id: str) -> float:
        for c in self.contrasts:
            if c.contrast_id == contrast_id:
                return c.loglik
        raise KeyError(
            f"record ({self.sample_id!r}, {self.task!r}) has no contrast {contrast_id!r}"
        )


@dataclass(frozen=True, slots=True)
class Diagnostic:
    """One validation failure, locatable by file/line or sample id."""

    source: str
    rule: str
    message: str
    line: int | None = None
    sample_id: str | None = None

    def __str__(self) -> str:
        loc = self.source
        if self.line is not None:
            loc += f":{self.line}"
        if self.sample_id is not None:
            loc += f" [sample {self.sample_id}]"
        return f"{loc}: {self.rule}: {self.message}"


class BundleValidationError(ValueError):
    """Raised with the complete list of diagnostics for an invalid input set."""

    def __init__(self, diagnostics: Iterable[Diagnostic]):
        self.diagnostics = tuple(diagnostics)
        body = "\n".join(f"  - {d}" for d in self.diagnostics)
        super().__init__(f"{len(self.diagnostics)} validation error(s):\n{body}")


@dataclass(frozen=True)
class EvaluationBundle:
    """Validated samples, likelihood records, and the task roster."""

    samples: Mapping[str, ContrastSample]
    records: Mapping[tuple[str, str], LikelihoodRecord]
    tasks: tuple[TaskRef, ...]

    def task(self, name: str) -> TaskRef:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(f"unknown task {name!r}; bundle declares {[t.name for t in self.tasks]}")

    @property
    def anchor(self) -> TaskRef | None:
        anchors = [t for t in self.tasks if t.is_anchor]
        return anchors[0] if anchors else None

    def with_anchor(self, anchor_name: str) -> "EvaluationBundle":
        """Return a copy with exactly ``anchor_name`` flagged as the anchor task."""
        chosen = self.task(anchor_name)
        if chosen.perturbation_mode is not PerturbationMode.CONTRAST_OUTPUT:
            raise BundleValidationError([
                Diagnostic(
                    source="<bundle>",
                    rule="anchor_mode",
                    message=f"anchor task {anchor_name!r} must use contrast_output mode, "
                    f"found {chosen.perturbation_mode.value}",
                )
            ])
        tasks = tuple(replace(t, is_anchor=(t.name == anchor_name)) for t in self.tasks)
        return EvaluationBundle(samples=self.samples, records=self.records, tasks=tasks)


# ---------------------------------------------------------------------------
# Serialization


def sample_to_dict(sample: ContrastSample) -> dict:
    out: dict = {
        "sample_id": sample.sample_id,
        "image_id": sample.image_id,
        "caption": sample.caption,
        "concept_span": list(sample.concept_span),
        "category": sample.category,
    }
    if sample.vqa is not None:
        out["vqa"] = {"question": sample.vqa.question, "answer": sample.vqa.answer}
    if sample.localization is not None:
        out["localization"] = {
            "query": sample.localization.query,
            "boxes": [list(b) for b in sample.localization.boxes],
        }
    if sample.generation_prompt is not None:
        out["generation_prompt"] = sample.generation_prompt
    out["contrasts"] = [
        {"contrast_id": c.contrast_id, "replacement": c.replacement} for c in sample.contrasts
    ]
    return out


def record_to_dict(record: LikelihoodRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "task": record.task,
        "mode": record.mode.value,
        "gold_loglik": record.gold_loglik,
        "contrasts": [
            {"contrast_id": c.contrast_id, "loglik": c.loglik} for c in record.contrasts
        ],
    }


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_samples_jsonl(path: str | Path, samples: Iterable[ContrastSample]) -> None:
    text = "".join(_dump_line(sample_to_dict(s)) + "\n" for s in samples)
    Path(path).write_text(text, encoding="utf-8")


def write_records_jsonl(path: str | Path, records: Iterable[LikelihoodRecord]) -> None:
    text = "".join(_dump_line(record_to_dict(r)) + "\n" for r in records)
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# Parsing

class _Collector:
    def __init__(self, source: str):
        self.source = source
        self.diagnostics: list[Diagnostic] = []

    def add(self, rule: str, message: str, line: int | None = None,
            sample_id: str | None = None) -> None:
        self.diagnostics.append(
            Diagnostic(source=self.source, rule=rule, message=message,
                       line=line, sample_id=sample_id)
        )


def _expect_str(obj: dict, key: str, col: _Collector, line: int, sid: str | None) -> str | None:
    val = obj.get(key)
    if not isinstance(val, str):
        col.add("field_type", f"{key!r} must be a string, got {type(val).__name__}",
                line=line, sample_id=sid)
        return None
    return val


def _expect_real(obj: dict, key: str, col: _Collector, line: int, sid: str | None) -> float | None:
    val = obj.get(key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        col.add("field_type", f"{key!r} must be a JSON number, got {type(val).__name__}",
                line=line, sample_id=sid)
        return None
    val = float(val)
    if not math.isfinite(val):
        col.add("finite", f"{key!r} must be finite, got {val}", line=line, sample_id=sid)
        return None
    return val


def _parse_sample_obj(obj: dict, col: _Collector, line: int) -> ContrastSample | None:
    sid = obj.get("sample_id") if isinstance(obj.get("sample_id"), str) else None
    sample_id = _expect_str(obj, "sample_id", col, line, sid)
    image_id = _expect_str(obj, "image_id", col, line, sid)
    caption = _expect_str(obj, "caption", col, line, sid)
    category = _expect_str(obj, "category", col, line, sid)
    if None in (sample_id, image_id, caption, category):
        return None

    span_raw = obj.get("concept_span")
    if (
        not isinstance(span_raw, list)
        or len(span_raw) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in span_raw)
    ):
        col.add("field_type", "'concept_span' must be a pair of integer offsets",
                line=line, sample_id=sid)
        return None
    span = (span_raw[0], span_raw[1])
    if not (0 <= span[0] < span[1] <= len(caption)):
        col.add("concept_span", f"span {span} is empty or outside caption bounds "
                f"(caption length {len(caption)})", line=line, sample_id=sid)
        return None

    if category not in CATEGORIES:
        col.add("category", f"{category!r} is not one of {CATEGORIES}", line=line, sample_id=sid)
        return None

    vqa = None
    if "vqa" in obj:
        v = obj["vqa"]
        if (not isinstance(v, dict) or not isinstance(v.get("question"), str)
                or not isinstance(v.get("answer"), str)):
            col.add("field_type", "'vqa' must be {question, answer} of strings",
                    line=line, sample_id=sid)
            return None
        vqa = VqaAnnotation(question=v["question"], answer=v["answer"])

    localization = None
    if "localization" in obj:
        loc = obj["localization"]
        ok = isinstance(loc, dict) and isinstance(loc.get("query"), str) \
            and isinstance(loc.get("boxes"), list)
        boxes: list[tuple[float, float, float, float]] = []
        if ok:
            for b in loc["boxes"]:
                if (not isinstance(b, list) or len(b) != 4
                        or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                   and math.isfinite(float(x)) for x in b)):
                    ok = False
                    break
                boxes.append((float(b[0]), float(b[1]), float(b[2]), float(b[3])))
        if not ok:
            col.add("field_type", "'localization' must be {query, boxes: [[x,y,w,h], ...]}",
                    line=line, sample_id=sid)
            return None
        localization = LocalizationAnnotation(query=loc["query"], boxes=tuple(boxes))

    generation_prompt = None
    if "generation_prompt" in obj:
        if not isinstance(obj["generation_prompt"], str):
            col.add("field_type", "'generation_prompt' must be a string", line=line, sample_id=sid)
            return None
        generation_prompt = obj["generation_prompt"]

    contrasts_raw = obj.get("contrasts")
    if not isinstance(contrasts_raw, list):
        col.add("field_type", "'contrasts' must be a list", line=line, sample_id=sid)
        return None
    contrasts: list[ContrastEntry] = []
    for c in contrasts_raw:
        if (not isinstance(c, dict) or not isinstance(c.get("contrast_id"), str)
                or not isinstance(c.get("replacement"), str)):
            col.add("field_type", "each contrast must be {contrast_id, replacement} of strings",
                    line=line, sample_id=sid)
            return None
        contrasts.append(ContrastEntry(contrast_id=c["contrast_id"], replacement=c["replacement"]))

    seen_ids = set()
    for c in contrasts:
        if c.contrast_id in seen_ids:
            col.add("duplicate_contrast_id", f"contrast_id {c.contrast_id!r} repeats",
                    line=line, sample_id=sid)
            return None
        seen_ids.add(c.contrast_id)
    replacements = [c.replacement for c in contrasts]
    if len(set(replacements)) != len(replacements):
        col.add("duplicate_replacement", "replacements must be pairwise distinct",
                line=line, sample_id=sid)
        return None
    original = caption[span[0]:span[1]]
    if original in replacements:
        col.add("replacement_equals_original",
                f"replacement equals the span's original text {original!r}",
                line=line, sample_id=sid)
        return None

    return ContrastSample(
        sample_id=sample_id, image_id=image_id, caption=caption, concept_span=span,
        category=category, contrasts=tuple(contrasts), vqa=vqa,
        localization=localization, generation_prompt=generation_prompt,
    )


def _parse_record_obj(obj: dict, col: _Collector, line: int) -> LikelihoodRecord | None:
    sid = obj.get("sample_id") if isinstance(obj.get("sample_id"), str) else None
    sample_id = _expect_str(obj, "sample_id", col, line, sid)
    task = _expect_str(obj, "task", col, line, sid)
    mode_raw = _expect_str(obj, "mode", col, line, sid)
    gold = _expect_real(obj, "gold_loglik", col, line, sid)
    if None in (sample_id, task, mode_raw, gold):
        return None
    try:
        mode = PerturbationMode(mode_raw)
    except ValueError:
        col.add("mode", f"mode must be 'contrast_output' or 'contrast_input', got {mode_raw!r}",
                line=line, sample_id=sid)
        return None

    contrasts_raw = obj.get("contrasts")
    if not isinstance(contrasts_raw, list):
        col.add("field_type", "'contrasts' must be a list", line=line, sample_id=sid)
        return None
    contrasts: list[ContrastLoglik] = []
    for c in contrasts_raw:
        if not isinstance(c, dict) or not isinstance(c.get("contrast_id"), str):
            col.add("field_type", "each contrast must be {contrast_id, loglik}",
                    line=line, sample_id=sid)
            return None
        ll = _expect_real(c, "loglik", col, line, sid)
        if ll is None:
            return None
        contrasts.append(ContrastLoglik(contrast_id=c["contrast_id"], loglik=ll))

    return LikelihoodRecord(sample_id=sample_id, task=task, mode=mode,
                            gold_loglik=gold, contrasts=tuple(contrasts))


def _parse_jsonl(path: str | Path, parse_obj, col: _Collector) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                col.add("malformed_json", str(exc), line=lineno)
                continue
            if not isinstance(obj, dict):
                col.add("malformed_json", "line is not a JSON object", line=lineno)
                continue
            parsed = parse_obj(obj, col, lineno)
            if parsed is not None:
                out.append(parsed)
    return out


def parse_samples_jsonl(path: str | Path) -> dict[str, ContrastSample]:
    """Parse and validate a samples file; raises with all diagnostics on failure."""
    col = _Collector(str(path))
    samples = _parse_jsonl(path, _parse_sample_obj, col)
    by_id: dict[str, ContrastSample] = {}
    for s in samples:
        if s.sample_id in by_id:
            col.add("duplicate_sample_id", f"sample_id {s.sample_id!r} repeats",
                    sample_id=s.sample_id)
            continue
        by_id[s.sample_id] = s
    if col.diagnostics:
        raise BundleValidationError(col.diagnostics)
    return by_id


def build_bundle(
    samples: Mapping[str, ContrastSample] | Iterable[ContrastSample],
    records: Iterable[LikelihoodRecord],
    anchor: str | None = None,
    source: str = "<bundle>",
) -> EvaluationBundle:
    """Assemble and cross-validate a bundle from already-parsed pieces."""
    if isinstance(samples, Mapping):
        sample_map = dict(samples)
    else:
        sample_map = {s.sample_id: s for s in samples}
    col = _Collector(source)

    record_map: dict[tuple[str, str], LikelihoodRecord] = {}
    task_modes: dict[str, PerturbationMode] = {}
    for rec in records:
        key = (rec.sample_id, rec.task)
        if key in record_map:
            col.add("duplicate_record", f"record for task {rec.task!r} repeats",
                    sample_id=rec.sample_id)
            continue
        sample = sample_map.get(rec.sample_id)
        if sample is None:
            col.add("unknown_sample", f"record references unknown sample_id {rec.sample_id!r}",
                    sample_id=rec.sample_id)
            continue
        ids = rec.contrast_ids
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            col.add("duplicate_contrast_id",
                    f"record for task {rec.task!r} repeats contrast ids {dupes}",
                    sample_id=rec.sample_id)
            continue
        unknown = [i for i in ids if i not in sample.contrast_ids]
        if unknown:
            col.add("unknown_contrast_id",
                    f"record for task {rec.task!r} references unknown contrast ids {unknown}",
                    sample_id=rec.sample_id)
            continue
        prev_mode = task_modes.get(rec.task)
        if prev_mode is None:
            task_modes[rec.task] = rec.mode
        elif prev_mode is not rec.mode:
            col.add("mode_conflict",
                    f"task {rec.task!r} uses both perturbation modes across records",
                    sample_id=rec.sample_id)
            continue
        record_map[key] = rec

    # Records of one sample must overlap pairwise on contrast ids; records
    # with no contrasts at all are exempt (they are never evaluable).
    by_sample: dict[str, list[LikelihoodRecord]] = {}
    for rec in record_map.values():
        by_sample.setdefault(rec.sample_id, []).append(rec)
    for sample_id, recs in sorted(by_sample.items()):
        nonempty = [r for r in recs if r.contrasts]
        for i in range(len(nonempty)):
            for j in range(i + 1, len(nonempty)):
                a, b = nonempty[i], nonempty[j]
                if not set(a.contrast_ids) & set(b.contrast_ids):
                    col.add("no_shared_contrast",
                            f"records for tasks {a.task!r} and {b.task!r} share no contrast_id",
                            sample_id=sample_id)

    if col.diagnostics:
        raise BundleValidationError(col.diagnostics)

    tasks = tuple(TaskRef(name=name, perturbation_mode=mode)
                  for name, mode in sorted(task_modes.items()))
    bundle = EvaluationBundle(samples=sample_map, records=record_map, tasks=tasks)
    if anchor is not None:
        bundle = bundle.with_anchor(anchor)
    return bundle


def parse_bundle(
    samples_path: str | Path,
    records_path: str | Path,
    anchor: str | None = None,
) -> EvaluationBundle:
    """Parse a samples/records file pair into a validated bundle."""
    col = _Collector(str(samples_path))
    raw_samples = _parse_jsonl(samples_path, _parse_sample_obj, col)
    sample_map: dict[str, ContrastSample] = {}
    for s in raw_samples:
        if s.sample_id in sample_map:
            col.add("duplicate_sample_id", f"sample_id {s.sample_id!r} repeats",
                    sample_id=s.sample_id)
            continue
        sample_map[s.sample_id] = s

    rec_col = _Collector(str(records_path))
    raw_records = _parse_jsonl(records_path, _parse_record_obj, rec_col)
    if col.diagnostics or rec_col.diagnostics:
        raise BundleValidationError(col.diagnostics + rec_col.diagnostics)
    try:
        return build_bundle(sample_map, raw_records, anchor=anchor, source=str(records_path))
    except BundleValidationError:
        raise


# ---------------------------------------------------------------------------
# Dataset statistics


@dataclass(frozen=True, slots=True)
class CategoryStats:
    samples: int
    contrast_sets: int
    unique_replacements: int


@dataclass(frozen=True)
class DatasetStats:
    n_samples: int
    n_contrast_sets: int
    mean_contrasts_per_sample: float
    per_category: dict[str, CategoryStats] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_contrast_sets": self.n_contrast_sets,
            "mean_contrasts_per_sample": self.mean_contrasts_per_sample,
            "per_category": {
                cat: {
                    "samples": cs.samples,
                    "contrast_sets": cs.contrast_sets,
                    "unique_replacements": cs.unique_replacements,
                }
                for cat, cs in self.per_category.items()
            },
        }


def dataset_stats(
    bundle: EvaluationBundle | Mapping[str, ContrastSample],
) -> DatasetStats:
    """Sample, contrast-set, and per-category counts for a bundle or sample map."""
    samples = bundle.samples if isinstance(bundle, EvaluationBundle) else bundle
    n = len(samples)
    total = sum(len(s.contrasts) for s in samples.values())
    per_cat: dict[str, CategoryStats] = {}
    for cat in CATEGORIES:
        members = [s for s in samples.values() if s.category == cat]
        if not members:
            continue
        per_cat[cat] = CategoryStats(
            samples=len(members),
            contrast_sets=sum(len(s.contrasts) for s in members),
            unique_replacements=len({c.replacement for s in members for c in s.contrasts}),
        )
    return DatasetStats(
        n_samples=n,
        n_contrast_sets=total,
        mean_contrasts_per_sample=(total / n) if n else 0.0,
        per_category=per_cat,
    )
