/**
 * Normalization layer between a checkpoint and the wire contract.
 *
 * The model is not trusted to produce contract-shaped output: raw task
 * scores are normalized into distributions here (softmax for single-label
 * tasks, [0, 1] clamping for multi-label), and checkpoint-native UTF-16
 * span offsets are converted to the Unicode scalar offsets the protocol
 * requires. Spans that cannot be converted cleanly are dropped rather
 * than emitted broken.
 */

import { EncoderModel, RawEntity, RawTextOutput } from "./encoder.js";
import { GuardSchema, TaskSpec } from "./schema.js";

const SOFTMAX_SCALE = 8.0;

export interface WireClassification {
  task: string;
  distribution: Record<string, number>;
  predicted: string;
  confidence: number;
}

export interface WireEntity {
  start: number; // Unicode scalar offsets, half open
  end: number;
  label: string;
  score: number;
}

export interface WireVerdict {
  classifications: WireClassification[];
  entities: WireEntity[];
}

export interface ScoreResult {
  verdicts: WireVerdict[];
  model_ms: number;
}

export function softmax(scores: number[]): number[] {
  const peak = Math.max(...scores);
  const exps = scores.map((s) => Math.exp(SOFTMAX_SCALE * (s - peak)));
  const total = exps.reduce((a, b) => a + b, 0);
  return exps.map((e) => e / total);
}

const clamp01 = (x: number) => Math.min(1, Math.max(0, x));

export function normalizeTask(task: TaskSpec, rawScores: number[]): WireClassification {
  if (rawScores.length !== task.labels.length) {
    throw new Error(`model returned ${rawScores.length} scores for ${task.labels.length} labels`);
  }
  const probs = task.multi_label ? rawScores.map(clamp01) : softmax(rawScores);
  const distribution: Record<string, number> = {};
  task.labels.forEach((label, i) => {
    distribution[label] = probs[i];
  });
  let best = 0;
  for (let i = 1; i < probs.length; i++) {
    if (probs[i] > probs[best]) best = i; // ties keep the first-listed label
  }
  const predicted = task.labels[best];
  return { task: task.task_name, distribution, predicted, confidence: distribution[predicted] };
}

/**
 * Map from UTF-16 code unit index to Unicode scalar index.
 * Indices inside a surrogate pair have no scalar equivalent and map to null.
 */
export function unitToScalarMap(text: string): Array<number | null> {
  const map: Array<number | null> = new Array(text.length + 1).fill(null);
  let units = 0;
  let scalars = 0;
  for (const point of text) {
    map[units] = scalars;
    units += point.length;
    scalars += 1;
  }
  map[units] = scalars;
  return map;
}

export function convertEntities(text: string, raw: RawEntity[]): WireEntity[] {
  const toScalar = unitToScalarMap(text);
  const out: WireEntity[] = [];
  for (const e of raw) {
    if (
      !Number.isInteger(e.startUnits) ||
      !Number.isInteger(e.endUnits) ||
      e.startUnits < 0 ||
      e.endUnits > text.length
    ) {
      continue;
    }
    const start = toScalar[e.startUnits];
    const end = toScalar[e.endUnits];
    if (start === null || end === null || start === undefined || end === undefined) {
      continue; // offset splits a surrogate pair: model bug, drop the span
    }
    if (start >= end) continue;
    out.push({ start, end, label: e.label, score: clamp01(e.rawScore) });
  }
  return out;
}

export function assembleVerdict(
  text: string,
  output: RawTextOutput,
  schema: GuardSchema,
): WireVerdict {
  const classifications = schema.classification_tasks.map((task) => {
    const raw = output.taskScores[task.task_name];
    if (!raw) throw new Error(`model returned no scores for task ${task.task_name}`);
    return normalizeTask(task, raw);
  });
  const known = new Set(schema.entity_types.map((e) => e.label));
  const entities = convertEntities(
    text,
    output.entities.filter((e) => known.has(e.label)),
  );
  return { classifications, entities };
}

export function scoreTexts(model: EncoderModel, texts: string[], schema: GuardSchema): ScoreResult {
  const started = performance.now();
  const outputs = model.run(texts, schema);
  if (outputs.length !== texts.length) {
    throw new Error(`model returned ${outputs.length} outputs for ${texts.length} texts`);
  }
  const verdicts = texts.map((text, i) => assembleVerdict(text, outputs[i], schema));
  return { verdicts, model_ms: performance.now() - started };
}
