import { readFileSync } from "node:fs";
import type http from "node:http";
import type { AddressInfo } from "node:net";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { GoldenSuite, validateWireResponse } from "../src/contract.js";
import { loadModel } from "../src/encoder.js";
import { createAdapter, parseConfig, DEFAULT_CONFIG } from "../src/server.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const SUITE_PATH = path.join(here, "..", "..", "tests", "golden", "wire_suite.json");

const suite: GoldenSuite = JSON.parse(readFileSync(SUITE_PATH, "utf-8"));

function listen(server: http.Server): Promise<string> {
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      resolve(`http://127.0.0.1:${port}`);
    });
  });
}

async function post(base: string, route: string, payload: unknown): Promise<Response> {
  return fetch(`${base}${route}`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  });
}

describe("golden wire-protocol suite", () => {
  let server: http.Server;
  let base: string;

  beforeAll(async () => {
    server = createAdapter(loadModel("trigram-v0"));
    base = await listen(server);
  });

  afterAll(() => {
    server.close();
  });

  it("serves /healthz", async () => {
    const res = await fetch(`${base}/healthz`);
    expect(res.status).toBe(200);
    expect(await res.text()).toBe("ok");
  });

  it("carries 20 requests", () => {
    expect(suite.entries).toHaveLength(20);
  });

  it("passes all 20 corpus requests with contract-valid responses", async () => {
    for (const entry of suite.entries) {
      if (entry.register_first) {
        const reg = await post(base, "/v1/schemas", entry.schema);
        expect(reg.status, entry.name).toBe(200);
        const { schema_id } = await reg.json();
        expect(schema_id, entry.name).toBe(entry.request.schema_id);
      }
      const res = await post(base, "/v1/score", entry.request);
      expect(res.status, entry.name).toBe(200);
      const payload = await res.json();
      const problems = validateWireResponse(entry.schema, entry.request.texts, payload);
      expect(problems, `${entry.name}: ${problems}`).toEqual([]);
    }
  });

  it("single-label probabilities sum to 1 within 1e-6 on every response", async () => {
    for (const entry of suite.entries.filter((e) => !e.register_first)) {
      const res = await post(base, "/v1/score", entry.request);
      const { verdicts } = await res.json();
      const multi = new Set(
        (entry.schema.classification_tasks ?? [])
          .filter((t: any) => t.multi_label)
          .map((t: any) => t.task_name),
      );
      for (const verdict of verdicts) {
        for (const c of verdict.classifications) {
          if (multi.has(c.task)) continue;
          const total = Object.values(c.distribution as Record<string, number>).reduce(
            (a, b) => a + b,
            0,
          );
          expect(Math.abs(total - 1)).toBeLessThanOrEqual(1e-6);
        }
      }
    }
  });

  it("maps protocol misuse to 400", async () => {
    const schema = suite.entries[0].schema;
    const both = await post(base, "/v1/score", {
      texts: ["x"],
      schema,
      schema_id: "0000000000000000",
    });
    expect(both.status).toBe(400);
    const neither = await post(base, "/v1/score", { texts: ["x"] });
    expect(neither.status).toBe(400);
    const unknown = await post(base, "/v1/score", {
      texts: ["x"],
      schema_id: "ffffffffffffffff",
    });
    expect(unknown.status).toBe(400);
    expect((await unknown.json()).detail).toMatch(/unknown schema id/);
    const badTexts = await post(base, "/v1/score", { texts: "not a list", schema });
    expect(badTexts.status).toBe(400);
    const emptySchema = await post(base, "/v1/schemas", { nothing: true });
    expect(emptySchema.status).toBe(400);
    const malformed = await fetch(`${base}/v1/score`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: "{nope",
    });
    expect(malformed.status).toBe(400);
    const lost = await fetch(`${base}/v1/nowhere`, { method: "POST", body: "{}" });
    expect(lost.status).toBe(404);
  });

  it("rejects batches beyond the configured maximum", async () => {
    const small = createAdapter(loadModel("trigram-v0"), { ...DEFAULT_CONFIG, maxBatch: 2 });
    const smallBase = await listen(small);
    try {
      const res = await post(smallBase, "/v1/score", {
        texts: ["a", "b", "c"],
        schema: suite.entries[0].schema,
      });
      expect(res.status).toBe(400);
      expect((await res.json()).detail).toMatch(/max batch/);
    } finally {
      small.close();
    }
  });

  it("maps inference failure to 500 with a JSON detail body", async () => {
    const exploding = {
      identifier: "exploding",
      run: () => {
        throw new Error("matmul device mismatch");
      },
    };
    const broken = createAdapter(exploding);
    const brokenBase = await listen(broken);
    try {
      const res = await post(brokenBase, "/v1/score", {
        texts: ["x"],
        schema: suite.entries[0].schema,
      });
      expect(res.status).toBe(500);
      expect((await res.json()).detail).toMatch(/inference failure/);
    } finally {
      broken.close();
    }
  });
});

describe("parseConfig", () => {
  it("parses flags and applies defaults", () => {
    const cfg = parseConfig(["--port", "9090", "--model", "trigram-v0", "--device", "cpu"]);
    expect(cfg).toEqual({ model: "trigram-v0", device: "cpu", maxBatch: 64, port: 9090 });
    expect(parseConfig([])).toEqual(DEFAULT_CONFIG);
  });

  it("rejects out-of-range ports, bad batch sizes, unknown flags", () => {
    expect(() => parseConfig(["--port", "70000"])).toThrow(/port out of range/);
    expect(() => parseConfig(["--port", "-1"])).toThrow(/port out of range/);
    expect(() => parseConfig(["--port", "abc"])).toThrow(/port out of range/);
    expect(() => parseConfig(["--max-batch", "0"])).toThrow(/positive integer/);
    expect(() => parseConfig(["--verbose"])).toThrow(/unknown flag/);
    expect(() => parseConfig(["--model"])).toThrow(/needs a value/);
  });
});
