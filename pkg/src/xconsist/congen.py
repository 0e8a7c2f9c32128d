"""Automated contrast-set generation over caption/QA fixture corpora.

The pipeline finds pivot instances by normalized word overlap between
captions and QA answers, proposes replacement concepts from an external
answer-score table, filters substituted captions by an external language-
model score table, and attaches heterogeneous task annotations.  External
models are represented purely as score tables on disk, so runs are
deterministic and desk-scale.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    ContrastEntry,
    ContrastSample,
    LocalizationAnnotation,
    VqaAnnotation,
    sample_to_dict,
)

# ---------------------------------------------------------------------------
# Normalization: lowercase, punctuation strip, stopword removal, and
# rule-based inflection reduction with an exception table.

_WORD_RE = re.compile(r"[A-Za-z0-9']+")

_STOPWORDS = frozenset("""
a an the this that these those there here is are was were be been being am
do does did doing have has had having will would can could shall should may
might must of in on at to for with from by as into onto over under and or
nor but so if then than it its he she they him her them his their our your
my me we you i us who whom which what where when why how not very some any
yes no
""".split())

# Irregular inflections the suffix rules would mangle.
_IRREGULAR = {
    "men": "man",
    "women": "woman",
    "children": "child",
    "people": "person",
    "mice": "mouse",
    "geese": "goose",
    "feet": "foot",
    "teeth": "tooth",
    "leaves": "leaf",
    "knives": "knife",
    "wolves": "wolf",
    "shelves": "shelf",
    "loaves": "loaf",
    "halves": "half",
    "wives": "wife",
    "lives": "life",
    "sheep": "sheep",
    "fish": "fish",
    "deer": "deer",
}

# Words that end in s but are not plurals.
_KEEP_AS_IS = frozenset({
    "glasses", "scissors", "pants", "jeans", "shorts", "grass", "dress",
    "bus", "gas", "lens", "tennis", "chess", "its", "this", "his",
})


def _reduce_inflection(word: str) -> str:
    if word in _IRREGULAR:
        return _IRREGULAR[word]
    if word in _KEEP_AS_IS:
        return word
    if word.endswith("'s"):
        word = word[:-2]
    if len(word) > 4 and word.endswith("ies"):
        return word[:-3] + "y"
    if len(word) > 4 and word.endswith("sses"):
        return word[:-2]
    if len(word) > 3 and (word.endswith("shes") or word.endswith("ches")
                          or word.endswith("xes") or word.endswith("zes")):
        return word[:-2]
    if len(word) > 3 and word.endswith("s") and not word.endswith("ss") \
            and not word.endswith("us") and not word.endswith("is"):
        return word[:-1]
    return word


def normalize_token(token: str) -> str:
    return _reduce_inflection(token.lower())


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Word tokens with character offsets into the original text."""
    return [(m.group(0), m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def content_tokens(text: str) -> list[tuple[str, int, int]]:
    """Normalized non-stopword tokens with original character spans."""
    out = []
    for tok, start, end in tokenize_with_spans(text):
        if tok.lower() in _STOPWORDS:
            continue
        norm = normalize_token(tok)
        if norm:
            out.append((norm, start, end))
    return out


def normalize_text(text: str) -> tuple[str, ...]:
    return tuple(tok for tok, _, _ in content_tokens(text))


# ---------------------------------------------------------------------------
# Corpus rows and score tables


@dataclass(frozen=True, slots=True)
class CaptionRow:
    image_id: str
    caption: str


@dataclass(frozen=True, slots=True)
class QaRow:
    image_id: str
    question: str
    answer: str


@dataclass(frozen=True, slots=True)
class BoxRow:
    image_id: str
    cls: str
    x: float
    y: float
    w: float
    h: float


class MissingScoresError(ValueError):
    """A scorer table lacks entries the pipeline needs; lists every missing query."""

    def __init__(self, table_name: str, queries: Sequence[str]):
        self.table_name = table_name
        self.queries = tuple(sorted(set(queries)))
        body = "\n".join(f"  - {q}" for q in self.queries)
        super().__init__(
            f"scorer table {table_name!r} is missing {len(self.queries)} "
            f"required quer{'y' if len(self.queries) == 1 else 'ies'}:\n{body}"
        )


# Answer-proposal tables use composite queries "<question> ||| <answer>".
PROPOSAL_SEPARATOR = " ||| "


class ScorerTable:
    """Total map from query text to a real score, loaded from two-column TSV."""

    def __init__(self, entries: Mapping[str, float], name: str = "<table>"):
        self.name = name
        self._entries = dict(entries)
        self._proposals: dict[str, list[tuple[str, float]]] = {}
        for query, score in self._entries.items():
            if PROPOSAL_SEPARATOR in query:
                question, answer = query.split(PROPOSAL_SEPARATOR, 1)
                self._proposals.setdefault(question, []).append((answer, score))

    @classmethod
    def from_tsv(cls, path: str | Path) -> "ScorerTable":
        entries: dict[str, float] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.rsplit("\t", 1)
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'query<TAB>score'")
                query, score_raw = parts
                try:
                    score = float(score_raw)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad score {score_raw!r}") from exc
                entries[query] = score
        return cls(entries, name=str(path))

    def lookup(self, query: str) -> float | None:
        return self._entries.get(query)

    def proposals(self, question: str) -> list[tuple[str, float]]:
        """Candidate (answer, score) pairs recorded for a question."""
        return list(self._proposals.get(question, ()))


def load_captions_csv(path: str | Path) -> list[CaptionRow]:
    return [
        CaptionRow(image_id=row["image_id"], caption=row["caption"])
        for row in _read_csv(path, ("image_id", "caption"))
    ]


def load_qa_csv(path: str | Path) -> list[QaRow]:
    return [
        QaRow(image_id=row["image_id"], question=row["question"], answer=row["answer"])
        for row in _read_csv(path, ("image_id", "question", "answer"))
    ]


def load_boxes_csv(path: str | Path) -> list[BoxRow]:
    rows = []
    for row in _read_csv(path, ("image_id", "class", "x", "y", "w", "h")):
        try:
            rows.append(BoxRow(
                image_id=row["image_id"], cls=row["class"],
                x=float(row["x"]), y=float(row["y"]),
                w=float(row["w"]), h=float(row["h"]),
            ))
        except ValueError as exc:
            raise ValueError(f"{path}: bad box coordinates in row {row}") from exc
    return rows


def _read_csv(path: str | Path, required: tuple[str, ...]) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing required columns {missing}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if any(row.get(c) is None for c in required):
                raise ValueError(f"{path}:{lineno}: short row")
            out.append(row)
        return out


# ---------------------------------------------------------------------------
# Step 1: pivot selection by caption/answer overlap


@dataclass(frozen=True, slots=True)
class OverlapMatch:
    """A QA answer found verbatim (post-normalization) inside a caption."""

    caption_index: int
    qa_index: int
    concept: tuple[str, ...]
    caption_span: tuple[int, int]
    answer_span: tuple[int, int]


def _find_subsequence(
    haystack: list[tuple[str, int, int]], needle: tuple[str, ...]
) -> tuple[int, int] | None:
    """Character span of the first contiguous token run matching ``needle``."""
    n = len(needle)
    for i in range(len(haystack) - n + 1):
        if all(haystack[i + j][0] == needle[j] for j in range(n)):
            return (haystack[i][1], haystack[i + n - 1][2])
    return None


def find_pivots(captions: Sequence[CaptionRow], qa_pairs: Sequence[QaRow]) -> list[OverlapMatch]:
    """All caption/QA pairs of one image whose normalized answer appears in the caption."""
    qa_by_image: dict[str, list[int]] = {}
    for qi, qa in enumerate(qa_pairs):
        qa_by_image.setdefault(qa.image_id, []).append(qi)

    matches: list[OverlapMatch] = []
    for ci, cap in enumerate(captions):
        cap_tokens = content_tokens(cap.caption)
        if not cap_tokens:
            continue
        for qi in qa_by_image.get(cap.image_id, ()):
            qa = qa_pairs[qi]
            ans_tokens = content_tokens(qa.answer)
            if not ans_tokens:
                continue  # answers like "yes" normalize to nothing
            concept = tuple(tok for tok, _, _ in ans_tokens)
            cap_span = _find_subsequence(cap_tokens, concept)
            if cap_span is None:
                continue
            answer_span = (ans_tokens[0][1], ans_tokens[-1][2])
            matches.append(OverlapMatch(
                caption_index=ci, qa_index=qi, concept=concept,
                caption_span=cap_span, answer_span=answer_span,
            ))
    return matches


# ---------------------------------------------------------------------------
# Step 2: replacement proposals from the answer-score table


def propose_candidates(
    match: OverlapMatch,
    question: str,
    answer_table: ScorerTable,
    max_k: int,
) -> list[str]:
    """Top-scored replacement concepts for a pivot, excluding the gold concept.

    Candidates whose normalized form equals the gold concept (or is empty)
    are dropped; candidates that collide post-normalization keep only the
    highest-scored surface form.
    """
    if max_k < 1:
        raise ValueError(f"max_k must be >= 1, got {max_k}")
    proposals = answer_table.proposals(question)
    if not proposals:
        raise MissingScoresError(answer_table.name, [question])
    ranked = sorted(proposals, key=lambda p: (-p[1], p[0]))
    out: list[str] = []
    seen_norm: set[tuple[str, ...]] = set()
    for answer, _score in ranked:
        norm = normalize_text(answer)
        if not norm or norm == match.concept or norm in seen_norm:
            continue
        seen_norm.add(norm)
        out.append(answer)
        if len(out) == max_k:
            break
    return out


# ---------------------------------------------------------------------------
# Step 3: LM-score filtering of substituted captions


@dataclass(frozen=True, slots=True)
class CandidateScore:
    caption: str
    lm_score: float
    source_answer: str
    rank: int


def substitute(caption: str, span: tuple[int, int], replacement: str) -> str:
    return caption[: span[0]] + replacement + caption[span[1]:]


def filter_candidates(
    candidates: Sequence[str],
    caption: str,
    span: tuple[int, int],
    lm_table: ScorerTable,
    threshold: float,
) -> list[CandidateScore]:
    """Keep substituted captions scoring at least ``threshold``, ranked by score."""
    scored: list[tuple[str, str, float]] = []
    missing: list[str] = []
    for cand in candidates:
        new_caption = substitute(caption, span, cand)
        score = lm_table.lookup(new_caption)
        if score is None:
            missing.append(new_caption)
        else:
            scored.append((new_caption, cand, score))
    if missing:
        raise MissingScoresError(lm_table.name, missing)
    kept = [(cap, src, s) for cap, src, s in scored if s >= threshold]
    kept.sort(key=lambda t: (-t[2], t[1]))
    return [
        CandidateScore(caption=cap, lm_score=s, source_answer=src, rank=i + 1)
        for i, (cap, src, s) in enumerate(kept)
    ]


# ---------------------------------------------------------------------------
# Step 4: heterogeneous task annotations and category labelling

_PERSON_WORDS = frozenset({
    "man", "woman", "boy", "girl", "male", "female", "guy", "lady", "person",
    "child", "kid", "baby",
})
_ANIMAL_WORDS = frozenset({
    "cat", "dog", "bird", "horse", "sheep", "cow", "elephant", "bear",
    "zebra", "giraffe", "duck", "rabbit", "monkey", "mouse", "goose", "deer",
    "fish", "jaguar", "lion", "tiger",
})
_FOOD_WORDS = frozenset({
    "pizza", "banana", "apple", "orange", "sandwich", "broccoli", "carrot",
    "cake", "donut", "salad", "soup", "bread", "cheese", "pasta", "egg",
    "rice", "pear", "olive", "cantaloupe", "hamburger", "pancake", "pie",
})
_ROLE_WORDS = frozenset({
    "chef", "player", "officer", "doctor", "teacher", "waiter", "pilot",
    "farmer", "nurse", "driver", "catcher", "batter", "surfer", "skier",
})
_LOCATION_WORDS = frozenset({
    "kitchen", "bathroom", "beach", "park", "street", "field", "room",
    "library", "hotel", "office", "sidewalk", "floor", "inside", "outside",
    "city", "forest", "mountain", "market", "station", "yard",
})
_ATTRIBUTE_WORDS = frozenset({
    "red", "blue", "green", "yellow", "black", "white", "brown", "grey",
    "gray", "pink", "purple", "tall", "small", "large", "big", "tiny",
    "wooden", "old", "young", "striped", "colorful", "shiny", "tiled",
    "metal", "plastic", "empty", "full",
})
_OBJECT_WORDS = frozenset({
    "frisbee", "keyboard", "laptop", "clock", "tower", "car", "bus",
    "train", "bicycle", "skateboard", "surfboard", "umbrella", "couch",
    "bench", "table", "chair", "kite", "ball", "blanket", "plate", "bowl",
    "bottle", "cup", "book", "phone", "teddy", "doll", "pillow", "vase",
    "window", "door",
})


def categorize_concept(concept: tuple[str, ...], is_box_class: bool) -> str:
    """Heuristic category label for a concept; hand labels stay authoritative."""
    words = set(concept)
    if any(ch.isdigit() for tok in concept for ch in tok):
        return "ocr"
    if words & _PERSON_WORDS:
        return "person"
    if words & _FOOD_WORDS:
        return "food"
    if words & _ROLE_WORDS:
        return "role"
    if words & _LOCATION_WORDS:
        return "location"
    if all(tok.endswith("ing") for tok in concept):
        return "action"
    if words & _ATTRIBUTE_WORDS:
        return "attribute"
    if words & _OBJECT_WORDS:
        return "object"
    if words & _ANIMAL_WORDS:
        return "animal"
    if is_box_class:
        return "object"
    return "misc"


@dataclass(frozen=True, slots=True)
class PivotDraft:
    """Assembled pivot plus surviving candidates, before task attachment."""

    sample_id: str
    image_id: str
    caption: str
    concept_span: tuple[int, int]
    concept: tuple[str, ...]
    vqa: VqaAnnotation
    candidates: tuple[CandidateScore, ...]


def attach_heterogeneous_tasks(
    draft: PivotDraft, boxes: Sequence[BoxRow]
) -> ContrastSample:
    """Finalize a sample: localization where a box class matches, plus the
    generation prompt (the gold caption reversed into an input)."""
    matching = tuple(
        (b.x, b.y, b.w, b.h)
        for b in boxes
        if b.image_id == draft.image_id and normalize_text(b.cls) == draft.concept
    )
    localization = None
    if matching:
        localization = LocalizationAnnotation(
            query=draft.caption[draft.concept_span[0]: draft.concept_span[1]],
            boxes=matching,
        )
    contrasts = tuple(
        ContrastEntry(contrast_id=f"c{c.rank}", replacement=c.source_answer)
        for c in draft.candidates
    )
    return ContrastSample(
        sample_id=draft.sample_id,
        image_id=draft.image_id,
        caption=draft.caption,
        concept_span=draft.concept_span,
        category=categorize_concept(draft.concept, is_box_class=bool(matching)),
        contrasts=contrasts,
        vqa=draft.vqa,
        localization=localization,
        generation_prompt=draft.caption,
    )


# ---------------------------------------------------------------------------
# Full pipeline


@dataclass(frozen=True)
class PipelineConfig:
    threshold: float
    max_k: int = 5


@dataclass(frozen=True)
class PipelineResult:
    samples: tuple[ContrastSample, ...]
    provenance: tuple[dict, ...]

    def samples_jsonl(self) -> str:
        return "".join(
            json.dumps(sample_to_dict(s), ensure_ascii=False, separators=(",", ":")) + "\n"
            for s in self.samples
        )

    def provenance_jsonl(self) -> str:
        return "".join(
            json.dumps(p, ensure_ascii=False, separators=(",", ":")) + "\n"
            for p in self.provenance
        )


def run_pipeline(
    captions: Sequence[CaptionRow],
    qa_pairs: Sequence[QaRow],
    boxes: Sequence[BoxRow],
    answer_table: ScorerTable,
    lm_table: ScorerTable,
    config: PipelineConfig,
) -> PipelineResult:
    """Steps 1-4 composed deterministically over in-memory corpora.

    Missing scorer entries anywhere in the corpus are collected and raised
    together, listing every query still to be scored.
    """
    matches = find_pivots(captions, qa_pairs)

    missing_answer_queries: list[str] = []
    missing_lm_queries: list[str] = []
    staged: list[tuple[OverlapMatch, PivotDraft, list[dict]]] = []

    for match in matches:
        cap = captions[match.caption_index]
        qa = qa_pairs[match.qa_index]
        proposals = answer_table.proposals(qa.question)
        if not proposals:
            missing_answer_queries.append(qa.question)
            continue

        events: list[dict] = []
        ranked = sorted(proposals, key=lambda p: (-p[1], p[0]))
        survivors: list[tuple[str, float]] = []
        seen_norm: set[tuple[str, ...]] = set()
        for answer, ascore in ranked:
            norm = normalize_text(answer)
            if not norm or norm == match.concept or norm in seen_norm:
                events.append({"replacement": answer, "answer_score": ascore,
                               "caption": None, "lm_score": None,
                               "status": "excluded_gold_or_duplicate", "rank": None})
                continue
            seen_norm.add(norm)
            if len(survivors) < config.max_k:
                survivors.append((answer, ascore))
            else:
                events.append({"replacement": answer, "answer_score": ascore,
                               "caption": None, "lm_score": None,
                               "status": "beyond_max_k", "rank": None})

        scored: list[tuple[str, str, float, float]] = []
        for answer, ascore in survivors:
            new_caption = substitute(cap.caption, match.caption_span, answer)
            lm_score = lm_table.lookup(new_caption)
            if lm_score is None:
                missing_lm_queries.append(new_caption)
                continue
            scored.append((new_caption, answer, ascore, lm_score))

        kept = [(c, a, s_a, s_l) for c, a, s_a, s_l in scored if s_l >= config.threshold]
        kept.sort(key=lambda t: (-t[3], t[1]))
        candidates = tuple(
            CandidateScore(caption=c, lm_score=s_l, source_answer=a, rank=i + 1)
            for i, (c, a, _s_a, s_l) in enumerate(kept)
        )
        kept_answers = {c.source_answer: c.rank for c in candidates}
        for new_caption, answer, ascore, lm_score in scored:
            if answer in kept_answers:
                events.append({"replacement": answer, "answer_score": ascore,
                               "caption": new_caption, "lm_score": lm_score,
                               "status": "kept", "rank": kept_answers[answer]})
            else:
                events.append({"replacement": answer, "answer_score": ascore,
                               "caption": new_caption, "lm_score": lm_score,
                               "status": "below_threshold", "rank": None})

        sample_id = f"{cap.image_id}:{match.caption_index}:{match.qa_index}"
        draft = PivotDraft(
            sample_id=sample_id,
            image_id=cap.image_id,
            caption=cap.caption,
            concept_span=match.caption_span,
            concept=match.concept,
            vqa=VqaAnnotation(question=qa.question, answer=qa.answer),
            candidates=candidates,
        )
        staged.append((match, draft, events))

    if missing_answer_queries:
        raise MissingScoresError(answer_table.name, missing_answer_queries)
    if missing_lm_queries:
        raise MissingScoresError(lm_table.name, missing_lm_queries)

    staged.sort(key=lambda t: (t[1].image_id, t[0].caption_index, t[0].qa_index))
    samples: list[ContrastSample] = []
    provenance: list[dict] = []
    for match, draft, events in staged:
        entry = {
            "sample_id": draft.sample_id,
            "image_id": draft.image_id,
            "question": draft.vqa.question,
            "concept": " ".join(match.concept),
            "emitted": bool(draft.candidates),
            "candidates": events,
        }
        provenance.append(entry)
        if draft.candidates:
            samples.append(attach_heterogeneous_tasks(draft, boxes))
    return PipelineResult(samples=tuple(samples), provenance=tuple(provenance))


def run_pipeline_from_paths(
    captions_path: str | Path,
    qa_path: str | Path,
    boxes_path: str | Path,
    answer_scores_path: str | Path,
    lm_scores_path: str | Path,
    config: PipelineConfig,
) -> PipelineResult:
    return run_pipeline(
        captions=load_captions_csv(captions_path),
        qa_pairs=load_qa_csv(qa_path),
        boxes=load_boxes_csv(boxes_path),
        answer_table=ScorerTable.from_tsv(answer_scores_path),
        lm_table=ScorerTable.from_tsv(lm_scores_path),
        config=config,
    )
