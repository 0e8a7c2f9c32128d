#!/usr/bin/env node
/** Adapter CLI: score contrast samples, or export scorer tables.
 *
 *   xconsist-adapter score --samples samples.jsonl --model builtin:chargram \
 *       --task caption --mode contrast_output --out records.jsonl
 *   xconsist-adapter export-tables --samples samples.jsonl --queries qs.txt \
 *       --table answers --top-k 5 --out answers.tsv
 */

import { parseArgs } from "node:util";

import { writeFileAtomic, readSamples } from "./jsonl.js";
import { loadModel } from "./model.js";
import { corpusText, runScoringJob, TASK_MODES } from "./score.js";
import { answerTableLines, answerVocabulary, lmTableLines, readQueries } from "./tables.js";
import { PerturbationMode, recordToJson } from "./types.js";

function fail(message: string): never {
  process.stderr.write(`error: ${message}\n`);
  process.exit(2);
}

function required(values: Record<string, string | undefined>, key: string): string {
  const value = values[key];
  if (value === undefined) fail(`--${key} is required`);
  return value;
}

function cmdScore(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      samples: { type: "string" },
      model: { type: "string", default: "builtin:chargram" },
      task: { type: "string" },
      mode: { type: "string" },
      "batch-size": { type: "string", default: "16" },
      device: { type: "string", default: "cpu" },
      out: { type: "string" },
    },
  });
  const task = required(values, "task");
  const declared = TASK_MODES[task];
  if (declared === undefined) {
    fail(`unknown task ${JSON.stringify(task)}; expected one of ${Object.keys(TASK_MODES).join(", ")}`);
  }
  const mode = (values.mode ?? declared) as PerturbationMode;
  if (mode !== "contrast_output" && mode !== "contrast_input") {
    fail(`--mode must be contrast_output or contrast_input, got ${values.mode}`);
  }
  const batchSize = Number(values["batch-size"]);
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    fail(`--batch-size must be a positive integer, got ${values["batch-size"]}`);
  }
  const outcome = runScoringJob({
    samplesPath: required(values, "samples"),
    model: values.model!,
    task,
    mode,
    batchSize,
    device: values.device!,
  });
  for (const warning of outcome.warnings) {
    process.stderr.write(`warning: ${warning}\n`);
  }
  const text = outcome.records.map((r) => recordToJson(r) + "\n").join("");
  writeFileAtomic(required(values, "out"), text);
  process.stdout.write(
    `wrote ${outcome.records.length} records for task ${task} ` +
    `(${outcome.skipped.length} samples without this task's annotation)\n`,
  );
  return 0;
}

function cmdExportTables(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      samples: { type: "string" },
      queries: { type: "string" },
      model: { type: "string", default: "builtin:chargram" },
      table: { type: "string" },
      "top-k": { type: "string", default: "5" },
      out: { type: "string" },
    },
  });
  const kind = required(values, "table");
  if (kind !== "answers" && kind !== "lm") {
    fail(`--table must be "answers" or "lm", got ${kind}`);
  }
  const samples = readSamples(required(values, "samples"));
  const model = loadModel(values.model!, corpusText(samples));
  const queries = readQueries(required(values, "queries"));
  const topK = Number(values["top-k"]);
  const lines = kind === "lm"
    ? lmTableLines(queries, model)
    : answerTableLines(queries, answerVocabulary(samples), model, topK);
  writeFileAtomic(required(values, "out"), lines.join("\n") + (lines.length ? "\n" : ""));
  process.stdout.write(`wrote ${lines.length} ${kind} table rows\n`);
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "score") return cmdScore(rest);
    if (command === "export-tables") return cmdExportTables(rest);
    fail(`unknown command ${JSON.stringify(command)}; expected score or export-tables`);
  } catch (err) {
    fail((err as Error).message);
  }
}

process.exit(main(process.argv.slice(2)));
