/** Wire-format types shared with the evaluation toolkit, plus strict parsers. */

export type PerturbationMode = "contrast_output" | "contrast_input";

export interface ContrastEntry {
  contrast_id: string;
  replacement: string;
}

export interface ContrastSample {
  sample_id: string;
  image_id: string;
  caption: string;
  concept_span: [number, number];
  category: string;
  vqa?: { question: string; answer: string };
  localization?: { query: string; boxes: number[][] };
  generation_prompt?: string;
  contrasts: ContrastEntry[];
}

export interface ContrastLoglik {
  contrast_id: string;
  loglik: number;
}

export interface LikelihoodRecord {
  sample_id: string;
  task: string;
  mode: PerturbationMode;
  gold_loglik: number;
  contrasts: ContrastLoglik[];
}

export interface ScoringJob {
  samplesPath: string;
  model: string;
  task: string;
  mode: PerturbationMode;
  batchSize: number;
  device: string;
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function asString(value: unknown, label: string): string {
  if (typeof value !== "string") {
    throw new TypeError(`${label} must be a string (got ${JSON.stringify(value)})`);
  }
  return value;
}

function asFiniteNumber(value: unknown, label: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new TypeError(`${label} must be a finite number (got ${JSON.stringify(value)})`);
  }
  return value;
}

export function parseContrastSample(value: unknown, where: string): ContrastSample {
  if (!isRecord(value)) throw new TypeError(`${where}: sample line is not an object`);
  const sample_id = asString(value.sample_id, `${where}.sample_id`);
  const image_id = asString(value.image_id, `${where}.image_id`);
  const caption = asString(value.caption, `${where}.caption`);
  const span = value.concept_span;
  if (
    !Array.isArray(span) || span.length !== 2 ||
    !Number.isInteger(span[0]) || !Number.isInteger(span[1])
  ) {
    throw new TypeError(`${where}.concept_span must be a pair of integers`);
  }
  const [start, end] = span as [number, number];
  if (!(0 <= start && start < end && end <= caption.length)) {
    throw new TypeError(`${where}.concept_span ${JSON.stringify(span)} out of caption bounds`);
  }
  const category = asString(value.category, `${where}.category`);

  let vqa: ContrastSample["vqa"];
  if (value.vqa !== undefined) {
    if (!isRecord(value.vqa)) throw new TypeError(`${where}.vqa must be an object`);
    vqa = {
      question: asString(value.vqa.question, `${where}.vqa.question`),
      answer: asString(value.vqa.answer, `${where}.vqa.answer`),
    };
  }

  let localization: ContrastSample["localization"];
  if (value.localization !== undefined) {
    if (!isRecord(value.localization)) throw new TypeError(`${where}.localization must be an object`);
    const boxesRaw = value.localization.boxes;
    if (!Array.isArray(boxesRaw)) throw new TypeError(`${where}.localization.boxes must be an array`);
    const boxes = boxesRaw.map((b, i) => {
      if (!Array.isArray(b) || b.length !== 4) {
        throw new TypeError(`${where}.localization.boxes[${i}] must have four numbers`);
      }
      return b.map((x, j) => asFiniteNumber(x, `${where}.localization.boxes[${i}][${j}]`));
    });
    localization = {
      query: asString(value.localization.query, `${where}.localization.query`),
      boxes,
    };
  }

  let generation_prompt: string | undefined;
  if (value.generation_prompt !== undefined) {
    generation_prompt = asString(value.generation_prompt, `${where}.generation_prompt`);
  }

  if (!Array.isArray(value.contrasts)) {
    throw new TypeError(`${where}.contrasts must be an array`);
  }
  const seen = new Set<string>();
  const contrasts = value.contrasts.map((c, i) => {
    if (!isRecord(c)) throw new TypeError(`${where}.contrasts[${i}] must be an object`);
    const contrast_id = asString(c.contrast_id, `${where}.contrasts[${i}].contrast_id`);
    const replacement = asString(c.replacement, `${where}.contrasts[${i}].replacement`);
    if (seen.has(contrast_id)) {
      throw new TypeError(`${where}.contrasts repeats contrast_id ${contrast_id}`);
    }
    seen.add(contrast_id);
    return { contrast_id, replacement };
  });

  return {
    sample_id, image_id, caption, concept_span: [start, end], category,
    ...(vqa !== undefined ? { vqa } : {}),
    ...(localization !== undefined ? { localization } : {}),
    ...(generation_prompt !== undefined ? { generation_prompt } : {}),
    contrasts,
  };
}

export function parseLikelihoodRecord(value: unknown, where: string): LikelihoodRecord {
  if (!isRecord(value)) throw new TypeError(`${where}: record line is not an object`);
  const mode = asString(value.mode, `${where}.mode`);
  if (mode !== "contrast_output" && mode !== "contrast_input") {
    throw new TypeError(`${where}.mode must be contrast_output or contrast_input`);
  }
  if (!Array.isArray(value.contrasts)) {
    throw new TypeError(`${where}.contrasts must be an array`);
  }
  return {
    sample_id: asString(value.sample_id, `${where}.sample_id`),
    task: asString(value.task, `${where}.task`),
    mode,
    gold_loglik: asFiniteNumber(value.gold_loglik, `${where}.gold_loglik`),
    contrasts: value.contrasts.map((c, i) => {
      if (!isRecord(c)) throw new TypeError(`${where}.contrasts[${i}] must be an object`);
      return {
        contrast_id: asString(c.contrast_id, `${where}.contrasts[${i}].contrast_id`),
        loglik: asFiniteNumber(c.loglik, `${where}.contrasts[${i}].loglik`),
      };
    }),
  };
}

/** Serialize a record with the canonical key order of the wire format. */
export function recordToJson(record: LikelihoodRecord): string {
  return JSON.stringify({
    sample_id: record.sample_id,
    task: record.task,
    mode: record.mode,
    gold_loglik: record.gold_loglik,
    contrasts: record.contrasts.map((c) => ({
      contrast_id: c.contrast_id,
      loglik: c.loglik,
    })),
  });
}
