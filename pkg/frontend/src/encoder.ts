/**
 * Deterministic stand-in encoder with checkpoint-native output conventions.
 *
 * Scores classification labels and candidate entity spans by character
 * trigram similarity. Like a real exported checkpoint, it reports raw
 * per-label scores (not distributions) and span offsets in UTF-16 code
 * units (the runtime's native string indexing); the adapter layer owns
 * normalization and offset conversion.
 */

import { fnv1a64, GuardSchema } from "./schema.js";

export const VECTOR_DIM = 256;
export const MAX_SPAN_WIDTH = 12;
export const MAX_SEQUENCE_CHARS = 2048;
export const SCORE_THRESHOLD = 0.5;

export interface RawEntity {
  startUnits: number; // UTF-16 code units, checkpoint-native
  endUnits: number;
  label: string;
  rawScore: number;
}

export interface RawTextOutput {
  taskScores: Record<string, number[]>; // aligned with the task's label order
  entities: RawEntity[];
  truncated: boolean;
}

export interface EncoderModel {
  readonly identifier: string;
  run(texts: string[], schema: GuardSchema): RawTextOutput[];
}

const encoder = new TextEncoder();

export function trigramVector(text: string, dim: number = VECTOR_DIM): Int32Array {
  const padded = ` ${text.toLowerCase()} `;
  const points = Array.from(padded); // trigrams are code point windows
  const counts = new Int32Array(dim);
  for (let i = 0; i + 2 < points.length; i++) {
    const gram = points[i] + points[i + 1] + points[i + 2];
    counts[Number(fnv1a64(encoder.encode(gram)) % BigInt(dim))] += 1;
  }
  return counts;
}

export function cosine(u: Int32Array, v: Int32Array): number {
  let dot = 0;
  let nu = 0;
  let nv = 0;
  for (let i = 0; i < u.length; i++) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (dot === 0) return 0;
  return dot / (Math.sqrt(nu) * Math.sqrt(nv));
}

/** Word-character token extents in UTF-16 code units. */
export function tokenizeUnits(text: string): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  for (const m of text.matchAll(/[\p{L}\p{N}_]+/gu)) {
    out.push([m.index!, m.index! + m[0].length]);
  }
  return out;
}

/** All token-aligned spans of 1..maxWidth tokens, in extent units. */
export function enumerateSpans(
  extents: Array<[number, number]>,
  maxWidth: number = MAX_SPAN_WIDTH,
): Array<[number, number]> {
  const n = extents.length;
  const out: Array<[number, number]> = [];
  for (let width = 1; width <= Math.min(maxWidth, n); width++) {
    for (let i = 0; i + width <= n; i++) {
      out.push([extents[i][0], extents[i + width - 1][1]]);
    }
  }
  return out;
}

function labelVectors(schema: GuardSchema): Map<string, Int32Array> {
  const reps = new Map<string, Int32Array>();
  for (const task of schema.classification_tasks) {
    for (const label of task.labels) {
      reps.set(`task:${task.task_name}:${label}`, trigramVector(label));
    }
  }
  for (const ent of schema.entity_types) {
    reps.set(`entity:${ent.label}`, trigramVector(`${ent.label} ${ent.description}`.trim()));
  }
  return reps;
}

class TrigramEncoder implements EncoderModel {
  readonly identifier = "trigram-v0";

  run(texts: string[], schema: GuardSchema): RawTextOutput[] {
    const reps = labelVectors(schema);
    return texts.map((full) => {
      // truncation counts Unicode scalars, matching the wire contract
      const points = Array.from(full);
      const truncated = points.length > MAX_SEQUENCE_CHARS;
      const text = truncated ? points.slice(0, MAX_SEQUENCE_CHARS).join("") : full;
      const textVec = trigramVector(text);

      const taskScores: Record<string, number[]> = {};
      for (const task of schema.classification_tasks) {
        taskScores[task.task_name] = task.labels.map((label) =>
          cosine(textVec, reps.get(`task:${task.task_name}:${label}`)!),
        );
      }

      const entities: RawEntity[] = [];
      if (schema.entity_types.length > 0) {
        for (const [start, end] of enumerateSpans(tokenizeUnits(text))) {
          const spanVec = trigramVector(text.slice(start, end));
          let bestLabel: string | null = null;
          let bestScore = 0;
          for (const ent of schema.entity_types) {
            const score = cosine(spanVec, reps.get(`entity:${ent.label}`)!);
            if (score > bestScore) {
              bestLabel = ent.label;
              bestScore = score;
            }
          }
          if (bestLabel !== null && bestScore > SCORE_THRESHOLD) {
            entities.push({ startUnits: start, endUnits: end, label: bestLabel, rawScore: bestScore });
          }
        }
      }
      return { taskScores, entities, truncated };
    });
  }
}

const MODELS: Record<string, () => EncoderModel> = {
  "trigram-v0": () => new TrigramEncoder(),
};

export function loadModel(identifier: string): EncoderModel {
  const factory = MODELS[identifier];
  if (!factory) {
    throw new Error(`unknown model identifier: ${identifier} (have: ${Object.keys(MODELS).join(", ")})`);
  }
  return factory();
}
