#!/usr/bin/env python3
"""Regenerate the frozen pipeline golden files from the fixture corpus.

Only run this after deliberately changing the generation pipeline or the
fixture corpus, and re-verify the diff by hand before committing.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from xconsist.congen import PipelineConfig, run_pipeline_from_paths  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "tests" / "data" / "fixture_corpus"
GOLDEN = ROOT / "tests" / "data" / "golden"


def main() -> int:
    result = run_pipeline_from_paths(
        CORPUS / "captions.csv",
        CORPUS / "qa.csv",
        CORPUS / "boxes.csv",
        CORPUS / "answer_scores.tsv",
        CORPUS / "lm_scores.tsv",
        PipelineConfig(threshold=0.2, max_k=4),
    )
    GOLDEN.mkdir(parents=True, exist_ok=True)
    (GOLDEN / "samples.jsonl").write_text(result.samples_jsonl(), encoding="utf-8")
    (GOLDEN / "provenance.jsonl").write_text(result.provenance_jsonl(), encoding="utf-8")
    print(f"rewrote {len(result.samples)} samples and {len(result.provenance)} "
          f"provenance rows under {GOLDEN}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
