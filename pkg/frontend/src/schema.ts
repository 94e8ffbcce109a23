/**
 * Guard schema wire types, canonical serialization, and content hashing.
 *
 * schemaId must agree byte for byte with the gateway: canonical bytes are
 * compact JSON with a fixed field sequence and every code unit >= 0x7F
 * escaped as lowercase \uXXXX (astral characters become surrogate pairs),
 * hashed with 64-bit FNV-1a.
 */

export interface TaskSpec {
  task_name: string;
  labels: string[];
  multi_label: boolean;
}

export interface EntityTypeSpec {
  label: string;
  description: string;
}

export interface GuardSchema {
  classification_tasks: TaskSpec[];
  entity_types: EntityTypeSpec[];
}

export class SchemaError extends Error {}

/** Parse an untrusted wire dict into a validated schema. */
export function parseSchema(raw: unknown): GuardSchema {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new SchemaError("schema must be a JSON object");
  }
  const data = raw as Record<string, unknown>;
  const tasks: TaskSpec[] = [];
  for (const item of asArray(data.classification_tasks, "classification_tasks")) {
    const t = item as Record<string, unknown>;
    const name = t.task_name;
    if (typeof name !== "string" || name === "") {
      throw new SchemaError("task_name must be a non-empty string");
    }
    const labels = asArray(t.labels, `task ${name} labels`).map((l) => {
      if (typeof l !== "string") throw new SchemaError(`task ${name} has a non-string label`);
      return l;
    });
    if (labels.length === 0) throw new SchemaError(`task ${name} has no labels`);
    if (new Set(labels).size !== labels.length) {
      throw new SchemaError(`task ${name} has duplicate labels`);
    }
    tasks.push({ task_name: name, labels, multi_label: Boolean(t.multi_label) });
  }
  if (new Set(tasks.map((t) => t.task_name)).size !== tasks.length) {
    throw new SchemaError("duplicate task names in schema");
  }
  const entities: EntityTypeSpec[] = [];
  for (const item of asArray(data.entity_types, "entity_types")) {
    const e = item as Record<string, unknown>;
    if (typeof e.label !== "string" || e.label === "") {
      throw new SchemaError("entity label must be a non-empty string");
    }
    entities.push({
      label: e.label,
      description: typeof e.description === "string" ? e.description : "",
    });
  }
  if (new Set(entities.map((e) => e.label)).size !== entities.length) {
    throw new SchemaError("duplicate entity labels in schema");
  }
  return { classification_tasks: tasks, entity_types: entities };
}

function asArray(value: unknown, what: string): unknown[] {
  if (value === undefined) return [];
  if (!Array.isArray(value)) throw new SchemaError(`${what} must be an array`);
  return value;
}

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x00000100000001b3n;
const MASK64 = 0xffffffffffffffffn;

export function fnv1a64(data: Uint8Array): bigint {
  let h = FNV_OFFSET;
  for (const byte of data) {
    h ^= BigInt(byte);
    h = (h * FNV_PRIME) & MASK64;
  }
  return h;
}

/** Compact ASCII-escaped JSON in the gateway's exact field sequence. */
export function canonicalSchemaBytes(schema: GuardSchema): Uint8Array {
  const ordered = {
    classification_tasks: schema.classification_tasks.map((t) => ({
      task_name: t.task_name,
      labels: t.labels,
      multi_label: t.multi_label,
    })),
    entity_types: schema.entity_types.map((e) => ({
      label: e.label,
      description: e.description,
    })),
  };
  let out = "";
  for (const ch of JSON.stringify(ordered)) {
    // non-ASCII stays unescaped in JSON.stringify; escape each code unit
    for (let i = 0; i < ch.length; i++) {
      const unit = ch.charCodeAt(i);
      out += unit >= 0x7f ? "\\u" + unit.toString(16).padStart(4, "0") : ch[i];
    }
  }
  return new TextEncoder().encode(out);
}

export function schemaId(schema: GuardSchema): string {
  return fnv1a64(canonicalSchemaBytes(schema)).toString(16).padStart(16, "0");
}
