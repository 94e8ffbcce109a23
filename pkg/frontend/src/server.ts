/**
 * HTTP adapter exposing a schema-driven encoder behind the gateway's
 * scoring protocol: POST /v1/score, POST /v1/schemas, GET /healthz.
 *
 * Request handling is serialized; the gateway's batching layer owns
 * concurrency. Errors map to 400 (bad request or unknown schema id)
 * and 500 (inference failure), always with a JSON {"detail"} body.
 */

import http from "node:http";
import { pathToFileURL } from "node:url";

import { scoreTexts } from "./adapter.js";
import { EncoderModel, loadModel } from "./encoder.js";
import { GuardSchema, parseSchema, SchemaError, schemaId } from "./schema.js";

export interface AdapterConfig {
  model: string;
  device: string;
  maxBatch: number;
  port: number;
}

export const DEFAULT_CONFIG: AdapterConfig = {
  model: "trigram-v0",
  device: "cpu",
  maxBatch: 64,
  port: 8081,
};

export function parseConfig(argv: string[]): AdapterConfig {
  const cfg = { ...DEFAULT_CONFIG };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) throw new Error(`${arg} needs a value`);
      return argv[i];
    };
    if (arg === "--model") cfg.model = next();
    else if (arg === "--device") cfg.device = next();
    else if (arg === "--max-batch") cfg.maxBatch = Number(next());
    else if (arg === "--port") cfg.port = Number(next());
    else throw new Error(`unknown flag: ${arg}`);
  }
  if (!Number.isInteger(cfg.port) || cfg.port < 0 || cfg.port > 65535) {
    throw new Error(`port out of range: ${cfg.port}`);
  }
  if (!Number.isInteger(cfg.maxBatch) || cfg.maxBatch < 1) {
    throw new Error(`max batch must be a positive integer: ${cfg.maxBatch}`);
  }
  return cfg;
}

const MAX_BODY_BYTES = 4 * 1024 * 1024;

function readBody(req: http.IncomingMessage): Promise<string> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    let size = 0;
    req.on("data", (chunk: Buffer) => {
      size += chunk.length;
      if (size > MAX_BODY_BYTES) {
        reject(new Error("request body too large"));
        req.destroy();
        return;
      }
      chunks.push(chunk);
    });
    req.on("end", () => resolve(Buffer.concat(chunks).toString("utf-8")));
    req.on("error", reject);
  });
}

function sendJson(res: http.ServerResponse, status: number, payload: unknown): void {
  const body = JSON.stringify(payload);
  res.writeHead(status, { "Content-Type": "application/json" });
  res.end(body);
}

class BadRequest extends Error {}

export function createAdapter(model: EncoderModel, cfg: AdapterConfig = DEFAULT_CONFIG): http.Server {
  const registered = new Map<string, GuardSchema>();

  const handleSchemas = (body: unknown) => {
    let schema: GuardSchema;
    try {
      schema = parseSchema(body);
    } catch (error) {
      throw new BadRequest(`bad schema: ${(error as Error).message}`);
    }
    if (schema.classification_tasks.length === 0 && schema.entity_types.length === 0) {
      throw new BadRequest("schema has no tasks and no entity types");
    }
    const id = schemaId(schema);
    registered.set(id, schema);
    return { schema_id: id };
  };

  const handleScore = (body: unknown) => {
    if (typeof body !== "object" || body === null || Array.isArray(body)) {
      throw new BadRequest("request body must be a JSON object");
    }
    const req = body as Record<string, unknown>;
    const texts = req.texts;
    if (!Array.isArray(texts) || !texts.every((t) => typeof t === "string")) {
      throw new BadRequest("texts must be an array of strings");
    }
    if (texts.length > cfg.maxBatch) {
      throw new BadRequest(`batch of ${texts.length} exceeds max batch ${cfg.maxBatch}`);
    }
    const hasInline = req.schema !== undefined;
    const hasId = req.schema_id !== undefined;
    if (hasInline === hasId) {
      throw new BadRequest("provide exactly one of schema, schema_id");
    }
    let schema: GuardSchema;
    if (hasId) {
      const found = typeof req.schema_id === "string" ? registered.get(req.schema_id) : undefined;
      if (!found) throw new BadRequest(`unknown schema id: ${req.schema_id}`);
      schema = found;
    } else {
      try {
        schema = parseSchema(req.schema);
      } catch (error) {
        throw new BadRequest(`bad schema: ${(error as Error).message}`);
      }
      if (schema.classification_tasks.length === 0 && schema.entity_types.length === 0) {
        throw new BadRequest("schema has no tasks and no entity types");
      }
    }
    return scoreTexts(model, texts as string[], schema);
  };

  return http.createServer(async (req, res) => {
    try {
      if (req.method === "GET" && req.url === "/healthz") {
        res.writeHead(200, { "Content-Type": "text/plain" });
        res.end("ok");
        return;
      }
      if (req.method !== "POST" || (req.url !== "/v1/score" && req.url !== "/v1/schemas")) {
        sendJson(res, 404, { detail: "not found" });
        return;
      }
      let body: unknown;
      try {
        body = JSON.parse(await readBody(req));
      } catch (error) {
        sendJson(res, 400, { detail: `malformed JSON body: ${(error as Error).message}` });
        return;
      }
      const payload = req.url === "/v1/schemas" ? handleSchemas(body) : handleScore(body);
      sendJson(res, 200, payload);
    } catch (error) {
      if (error instanceof BadRequest) {
        sendJson(res, 400, { detail: error.message });
      } else {
        sendJson(res, 500, { detail: `inference failure: ${(error as Error).message}` });
      }
    }
  });
}

export function serveAdapter(cfg: AdapterConfig): http.Server {
  const model = loadModel(cfg.model); // throws on unknown identifier
  const server = createAdapter(model, cfg);
  server.listen(cfg.port, () => {
    const addr = server.address();
    const port = typeof addr === "object" && addr ? addr.port : cfg.port;
    console.error(`model ${cfg.model} on ${cfg.device}, listening on :${port}`);
  });
  return server;
}

const isMain =
  typeof process.argv[1] === "string" && import.meta.url === pathToFileURL(process.argv[1]).href;

if (isMain) {
  try {
    serveAdapter(parseConfig(process.argv.slice(2)));
  } catch (error) {
    console.error(`startup failed: ${(error as Error).message}`);
    process.exit(1);
  }
}
