import { readFileSync, writeFileSync, mkdirSync, renameSync } from "node:fs";
import { dirname, join } from "node:path";

import { ContrastSample, parseContrastSample } from "./types.js";

export function readJsonlLines(path: string): unknown[] {
  const text = readFileSync(path, "utf-8");
  const out: unknown[] = [];
  text.split("\n").forEach((line, index) => {
    if (!line.trim()) return;
    try {
      out.push(JSON.parse(line));
    } catch (err) {
      throw new Error(`${path}:${index + 1}: malformed JSON (${(err as Error).message})`);
    }
  });
  return out;
}

export function readSamples(path: string): ContrastSample[] {
  return readJsonlLines(path).map((obj, i) =>
    parseContrastSample(obj, `${path}:${i + 1}`),
  );
}

/** Write atomically: temp file in the same directory, then rename. */
export function writeFileAtomic(path: string, text: string): void {
  mkdirSync(dirname(path), { recursive: true });
  const tmp = join(dirname(path), `.${process.pid}.${Date.now()}.tmp`);
  writeFileSync(tmp, text, "utf-8");
  renameSync(tmp, path);
}
