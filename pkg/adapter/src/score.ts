/** Candidate scoring: turns contrast samples into likelihood records.
 *
 * For contrast-output tasks the gold and each contrast output are scored
 * against the pivot input.  For contrast-input tasks the gold output is
 * scored against the pivot input and against each contrast input.
 */

import { ContrastSample, LikelihoodRecord, PerturbationMode, ScoringJob } from "./types.js";
import { ScoringModel, loadModel } from "./model.js";
import { readSamples } from "./jsonl.js";

export const TASK_MODES: Record<string, PerturbationMode> = {
  caption: "contrast_output",
  vqa: "contrast_output",
  localization: "contrast_input",
  generation: "contrast_input",
};

export interface ScoringPair {
  input: string;
  output: string;
}

function substitute(sample: ContrastSample, replacement: string): string {
  const [start, end] = sample.concept_span;
  return sample.caption.slice(0, start) + replacement + sample.caption.slice(end);
}

function boxesText(boxes: number[][]): string {
  return boxes.map((b) => b.join(",")).join(";");
}

/**
 * The gold scoring pair for a task, or undefined when the sample carries
 * no annotation for it (such samples are skipped, mirroring the partial
 * coverage of heterogeneous tasks).
 */
export function goldPair(sample: ContrastSample, task: string): ScoringPair | undefined {
  switch (task) {
    case "caption":
      return { input: `image ${sample.image_id}`, output: sample.caption };
    case "vqa":
      return sample.vqa && {
        input: `image ${sample.image_id} question ${sample.vqa.question}`,
        output: sample.vqa.answer,
      };
    case "localization":
      return sample.localization && {
        input: `image ${sample.image_id} locate ${sample.localization.query}`,
        output: boxesText(sample.localization.boxes),
      };
    case "generation":
      // Image outputs stand in as a deterministic token string; real
      // backends would score discrete image-token sequences here.
      return sample.generation_prompt === undefined ? undefined : {
        input: sample.generation_prompt,
        output: `image-tokens ${sample.image_id}`,
      };
    default:
      throw new Error(
        `unknown task ${JSON.stringify(task)}; expected one of ${Object.keys(TASK_MODES).join(", ")}`,
      );
  }
}

/** The scoring pair for one contrast candidate under the task's mode. */
export function contrastPair(
  sample: ContrastSample,
  task: string,
  replacement: string,
  gold: ScoringPair,
): ScoringPair {
  switch (task) {
    case "caption":
      return { input: gold.input, output: substitute(sample, replacement) };
    case "vqa":
      return { input: gold.input, output: replacement };
    case "localization":
      return {
        input: `image ${sample.image_id} locate ${replacement}`,
        output: gold.output,
      };
    case "generation":
      return { input: substitute(sample, replacement), output: gold.output };
    default:
      throw new Error(`unknown task ${JSON.stringify(task)}`);
  }
}

/** Corpus text the builtin model trains on: every string the file mentions. */
export function corpusText(samples: ContrastSample[]): string[] {
  const out: string[] = [];
  for (const s of samples) {
    out.push(s.caption);
    if (s.vqa) out.push(s.vqa.question, s.vqa.answer);
    if (s.localization) out.push(s.localization.query, boxesText(s.localization.boxes));
    if (s.generation_prompt !== undefined) out.push(s.generation_prompt);
    out.push(`image-tokens ${s.image_id}`);
    for (const c of s.contrasts) out.push(c.replacement);
  }
  return out;
}

export interface ScoreOutcome {
  records: LikelihoodRecord[];
  skipped: string[];
  warnings: string[];
}

export function scoreSamples(
  samples: ContrastSample[],
  model: ScoringModel,
  task: string,
  mode: PerturbationMode,
): ScoreOutcome {
  const declared = TASK_MODES[task];
  if (declared === undefined) {
    throw new Error(
      `unknown task ${JSON.stringify(task)}; expected one of ${Object.keys(TASK_MODES).join(", ")}`,
    );
  }
  if (declared !== mode) {
    throw new Error(
      `task ${JSON.stringify(task)} uses mode ${declared}, not ${mode}`,
    );
  }
  const records: LikelihoodRecord[] = [];
  const skipped: string[] = [];
  const warnings: string[] = [];
  for (const sample of samples) {
    const gold = goldPair(sample, task);
    if (gold === undefined) {
      skipped.push(sample.sample_id);
      continue;
    }
    if (sample.contrasts.length === 0) {
      warnings.push(`sample ${sample.sample_id} has no contrasts; emitting an empty record`);
    }
    records.push({
      sample_id: sample.sample_id,
      task,
      mode,
      gold_loglik: model.logprob(gold.output, gold.input),
      contrasts: sample.contrasts.map((c) => {
        const pair = contrastPair(sample, task, c.replacement, gold);
        return { contrast_id: c.contrast_id, loglik: model.logprob(pair.output, pair.input) };
      }),
    });
  }
  return { records, skipped, warnings };
}

export function runScoringJob(job: ScoringJob): ScoreOutcome {
  const samples = readSamples(job.samplesPath);
  const model = loadModel(job.model, corpusText(samples));
  return scoreSamples(samples, model, job.task, job.mode);
}
