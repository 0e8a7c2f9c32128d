/** Scoring backends.
 *
 * The builtin backend is an interpolated character trigram language model
 * fit on the corpus text of the samples being scored.  It is fully
 * deterministic, needs no weights from the network, and conditions on the
 * scoring input by prepending it (plus a separator) to the output text, so
 * contrast inputs genuinely change the score.  Scores are finite
 * log-likelihood-style values meant for within-record comparison, not
 * calibrated probabilities.
 */

import { readFileSync } from "node:fs";

export interface ScoringModel {
  readonly id: string;
  /** Natural-log likelihood of producing `output` given `input`. */
  logprob(output: string, input: string): number;
}

const SEPARATOR = "";
const BOS = "";

// Interpolation weights for trigram / bigram / unigram / uniform.
const LAMBDA = [0.5, 0.3, 0.15, 0.05] as const;
// Weight of the input-copy channel that conditions every output character
// on the whole input (the toy stand-in for cross-attention).
const COPY_WEIGHT = 0.25;
const COPY_SMOOTHING = 0.5;

export class CharTrigramModel implements ScoringModel {
  readonly id: string;
  private readonly tri = new Map<string, number>();
  private readonly triCtx = new Map<string, number>();
  private readonly bi = new Map<string, number>();
  private readonly biCtx = new Map<string, number>();
  private readonly uni = new Map<string, number>();
  private charCount = 0;
  private readonly vocab = new Set<string>();

  constructor(corpus: string[], id = "builtin:chargram") {
    this.id = id;
    for (const text of corpus) {
      const padded = BOS + BOS + text;
      for (let i = 2; i < padded.length; i++) {
        const c = padded[i]!;
        const ctx1 = padded[i - 1]!;
        const ctx2 = padded.slice(i - 2, i);
        this.vocab.add(c);
        this.charCount += 1;
        bump(this.uni, c);
        bump(this.bi, ctx1 + c);
        bump(this.biCtx, ctx1);
        bump(this.tri, ctx2 + c);
        bump(this.triCtx, ctx2);
      }
    }
    this.vocab.add(SEPARATOR);
  }

  private charProb(c: string, ctx2: string, ctx1: string): number {
    const v = Math.max(this.vocab.size, 2);
    const p3 = ratio(this.tri.get(ctx2 + ctx1 + c), this.triCtx.get(ctx2 + ctx1));
    const p2 = ratio(this.bi.get(ctx1 + c), this.biCtx.get(ctx1));
    const p1 = ratio(this.uni.get(c), this.charCount);
    return LAMBDA[0] * p3 + LAMBDA[1] * p2 + LAMBDA[2] * p1 + LAMBDA[3] / v;
  }

  logprob(output: string, input: string): number {
    const padded = BOS + BOS + input + SEPARATOR + output;
    const start = padded.length - output.length;
    const v = Math.max(this.vocab.size, 2);
    const copyCounts = new Map<string, number>();
    for (const c of input) bump(copyCounts, c);
    const copyDenominator = input.length + COPY_SMOOTHING * v;
    let total = 0;
    for (let i = start; i < padded.length; i++) {
      const c = padded[i]!;
      const lm = this.charProb(c, padded[i - 2]!, padded[i - 1]!);
      const copy = ((copyCounts.get(c) ?? 0) + COPY_SMOOTHING) / copyDenominator;
      total += Math.log((1 - COPY_WEIGHT) * lm + COPY_WEIGHT * copy);
    }
    return total;
  }
}

function bump(map: Map<string, number>, key: string): void {
  map.set(key, (map.get(key) ?? 0) + 1);
}

function ratio(num: number | undefined, den: number | undefined): number {
  if (!num || !den) return 0;
  return num / den;
}

/** Score table backend: exact lookup of "input  output" pairs. */
export class TableModel implements ScoringModel {
  readonly id: string;
  private readonly entries = new Map<string, number>();

  constructor(path: string) {
    this.id = `table:${path}`;
    const text = readFileSync(path, "utf-8");
    text.split("\n").forEach((line, index) => {
      if (!line.trim()) return;
      const cut = line.lastIndexOf("\t");
      if (cut < 0) throw new Error(`${path}:${index + 1}: expected 'query<TAB>score'`);
      const score = Number(line.slice(cut + 1));
      if (!Number.isFinite(score)) {
        throw new Error(`${path}:${index + 1}: bad score ${line.slice(cut + 1)}`);
      }
      this.entries.set(line.slice(0, cut), score);
    });
  }

  logprob(output: string, input: string): number {
    const key = input ? `${input}${SEPARATOR}${output}` : output;
    const hit = this.entries.get(key) ?? this.entries.get(output);
    if (hit === undefined) {
      throw new Error(`score table ${this.id} has no entry for ${JSON.stringify(key)}`);
    }
    return hit;
  }
}

/** Instantiate a backend from its identifier. */
export function loadModel(modelId: string, corpus: string[]): ScoringModel {
  if (modelId === "builtin:chargram") {
    return new CharTrigramModel(corpus);
  }
  if (modelId.startsWith("table:")) {
    return new TableModel(modelId.slice("table:".length));
  }
  throw new Error(
    `unknown model ${JSON.stringify(modelId)}; expected "builtin:chargram" or "table:<path>"`,
  );
}
