/** Scorer-table export for the contrast-set generation pipeline.
 *
 * Two table kinds, both two-column TSV (query <TAB> score):
 *  - "lm": each query line is a candidate caption; score is its mean
 *    per-character log-likelihood under the model.
 *  - "answers": each query line is a question; every candidate answer
 *    drawn from the samples file is scored against it and emitted as a
 *    composite "question ||| answer" row.
 */

import { readFileSync } from "node:fs";

import { ContrastSample } from "./types.js";
import { ScoringModel } from "./model.js";

const PROPOSAL_SEPARATOR = " ||| ";

export function readQueries(path: string): string[] {
  return readFileSync(path, "utf-8")
    .split("\n")
    .map((line) => line.trimEnd())
    .filter((line) => line.length > 0);
}

/** Candidate answer vocabulary: every VQA answer and every replacement. */
export function answerVocabulary(samples: ContrastSample[]): string[] {
  const vocab = new Set<string>();
  for (const s of samples) {
    if (s.vqa) vocab.add(s.vqa.answer);
    for (const c of s.contrasts) vocab.add(c.replacement);
  }
  return [...vocab].sort();
}

export function lmTableLines(queries: string[], model: ScoringModel): string[] {
  return queries.map((caption) => {
    const score = model.logprob(caption, "") / Math.max(caption.length, 1);
    return `${caption}\t${score}`;
  });
}

export function answerTableLines(
  questions: string[],
  vocabulary: string[],
  model: ScoringModel,
  topK: number,
): string[] {
  if (topK < 1) throw new Error(`topK must be >= 1, got ${topK}`);
  const lines: string[] = [];
  for (const question of questions) {
    const scored = vocabulary.map((answer) => ({
      answer,
      score: model.logprob(answer, question) / Math.max(answer.length, 1),
    }));
    scored.sort((a, b) => b.score - a.score || (a.answer < b.answer ? -1 : 1));
    for (const { answer, score } of scored.slice(0, topK)) {
      lines.push(`${question}${PROPOSAL_SEPARATOR}${answer}\t${score}`);
    }
  }
  return lines;
}
