/**
 * Wire-protocol contract checks, mirroring the gateway's golden suite
 * rules exactly so both sides accept and reject the same responses.
 *
 * Text lengths count Unicode scalars, not UTF-16 code units.
 */

export const SUM_TOL = 1e-6;
export const ARGMAX_TOL = 1e-9;

export interface SuiteEntry {
  name: string;
  register_first: boolean;
  schema: Record<string, any>;
  request: { texts: string[]; schema?: Record<string, any>; schema_id?: string };
}

export interface GoldenSuite {
  version: number;
  entries: SuiteEntry[];
}

const scalarLength = (text: string) => Array.from(text).length;

const isNum = (x: unknown): x is number => typeof x === "number" && Number.isFinite(x);

/** All contract violations in a /v1/score response body; empty means pass. */
export function validateWireResponse(
  schemaDict: Record<string, any>,
  texts: string[],
  payload: any,
): string[] {
  const problems: string[] = [];
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    return ["response body is not a JSON object"];
  }
  if (!isNum(payload.model_ms) || payload.model_ms < 0) {
    problems.push("model_ms missing or not a non-negative number");
  }
  const verdicts = payload.verdicts;
  if (!Array.isArray(verdicts) || verdicts.length !== texts.length) {
    problems.push(`verdicts must be a list of ${texts.length} items`);
    return problems;
  }

  const tasks = new Map<string, { labels: string[]; multi: boolean }>();
  for (const t of schemaDict.classification_tasks ?? []) {
    tasks.set(t.task_name, { labels: [...t.labels], multi: Boolean(t.multi_label) });
  }
  const entityLabels = new Set<string>(
    (schemaDict.entity_types ?? []).map((e: any) => e.label),
  );

  texts.forEach((text, i) => {
    const where = `verdict[${i}]`;
    const verdict = verdicts[i];
    if (typeof verdict !== "object" || verdict === null) {
      problems.push(`${where} is not an object`);
      return;
    }
    let classifications = verdict.classifications;
    if (!Array.isArray(classifications)) {
      problems.push(`${where}.classifications missing`);
      classifications = [];
    }
    const seen = classifications
      .filter((c: any) => typeof c === "object" && c !== null)
      .map((c: any) => String(c.task));
    const want = [...tasks.keys()].sort();
    if (JSON.stringify([...seen].sort()) !== JSON.stringify(want)) {
      problems.push(`${where} tasks [${seen}] do not match schema tasks [${want}]`);
    }
    for (const c of classifications) {
      if (typeof c !== "object" || c === null) {
        problems.push(`${where} classification is not an object`);
        continue;
      }
      const spec = tasks.get(c.task);
      if (!spec) continue; // already reported via the task-set check
      const dist = c.distribution;
      const distOk =
        typeof dist === "object" &&
        dist !== null &&
        !Array.isArray(dist) &&
        JSON.stringify(Object.keys(dist).sort()) === JSON.stringify([...spec.labels].sort());
      if (!distOk) {
        problems.push(`${where}.${c.task} distribution keys must equal the label set`);
        continue;
      }
      const probs = Object.values(dist) as unknown[];
      if (!probs.every((p) => isNum(p) && p >= 0 && p <= 1)) {
        problems.push(`${where}.${c.task} has probabilities outside [0, 1]`);
        continue;
      }
      const total = (probs as number[]).reduce((a, b) => a + b, 0);
      if (!spec.multi && Math.abs(total - 1) > SUM_TOL) {
        problems.push(`${where}.${c.task} single-label distribution sums to ${total}`);
      }
      if (!spec.labels.includes(c.predicted)) {
        problems.push(`${where}.${c.task} predicted ${JSON.stringify(c.predicted)} is not a task label`);
        continue;
      }
      const peak = Math.max(...(probs as number[]));
      if (dist[c.predicted] < peak - ARGMAX_TOL) {
        problems.push(`${where}.${c.task} predicted label is not an argmax`);
      }
      if (!isNum(c.confidence) || Math.abs(c.confidence - dist[c.predicted]) > SUM_TOL) {
        problems.push(`${where}.${c.task} confidence does not equal the predicted probability`);
      }
    }
    let entities = verdict.entities;
    if (!Array.isArray(entities)) {
      problems.push(`${where}.entities missing`);
      entities = [];
    }
    if (entityLabels.size === 0 && entities.length > 0) {
      problems.push(`${where} has entities but the schema declares no entity types`);
    }
    const length = scalarLength(text);
    for (const e of entities) {
      if (typeof e !== "object" || e === null) {
        problems.push(`${where} entity is not an object`);
        continue;
      }
      const spansOk =
        Number.isInteger(e.start) && Number.isInteger(e.end) && e.start >= 0 && e.start < e.end && e.end <= length;
      if (!spansOk) {
        problems.push(`${where} entity offsets [${e.start}, ${e.end}) invalid for text of ${length} scalars`);
      }
      if (!entityLabels.has(e.label)) {
        problems.push(`${where} entity label ${JSON.stringify(e.label)} not in schema`);
      }
      if (!isNum(e.score) || e.score < 0 || e.score > 1) {
        problems.push(`${where} entity score outside [0, 1]`);
      }
    }
  });
  return problems;
}
