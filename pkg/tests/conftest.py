from pathlib import Path

import pytest

from xconsist.core import (
    ContrastEntry,
    ContrastLoglik,
    ContrastSample,
    LikelihoodRecord,
    PerturbationMode,
    build_bundle,
)

DATA_DIR = Path(__file__).parent / "data"
CORPUS_DIR = DATA_DIR / "fixture_corpus"
GOLDEN_DIR = DATA_DIR / "golden"


@pytest.fixture
def corpus_dir() -> Path:
    return CORPUS_DIR


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR


def make_sample(sample_id: str, contrast_ids: list[str]) -> ContrastSample:
    caption = f"a photo of thing-{sample_id}"
    start = caption.index("thing-")
    return ContrastSample(
        sample_id=sample_id,
        image_id=f"im-{sample_id}",
        caption=caption,
        concept_span=(start, len(caption)),
        category="misc",
        contrasts=tuple(
            ContrastEntry(contrast_id=cid, replacement=f"other-{cid}")
            for cid in contrast_ids
        ),
    )


def make_record(
    sample_id: str,
    task: str,
    gold: float,
    contrasts: dict[str, float],
    mode: PerturbationMode = PerturbationMode.CONTRAST_OUTPUT,
) -> LikelihoodRecord:
    return LikelihoodRecord(
        sample_id=sample_id,
        task=task,
        mode=mode,
        gold_loglik=gold,
        contrasts=tuple(
            ContrastLoglik(contrast_id=cid, loglik=ll) for cid, ll in contrasts.items()
        ),
    )


def make_pair_bundle(per_sample: dict[str, tuple[float, dict, float, dict]]):
    """Bundle with tasks 'anchor' and 'eval' from per-sample loglik specs.

    per_sample maps sample_id -> (anchor_gold, anchor_contrasts,
    eval_gold, eval_contrasts).
    """
    samples = []
    records = []
    for sid, (a_gold, a_con, e_gold, e_con) in per_sample.items():
        ids = sorted(set(a_con) | set(e_con))
        samples.append(make_sample(sid, ids))
        records.append(make_record(sid, "anchor", a_gold, a_con))
        records.append(make_record(sid, "eval", e_gold, e_con))
    return build_bundle(samples, records, anchor="anchor")
