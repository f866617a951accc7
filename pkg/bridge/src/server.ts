/**
 * Wire-protocol HTTP endpoint over any Backend: GET /v1/info plus POST
 * /v1/segment and /v1/score_labels. A not-ready backend answers every
 * request 503 with the canonical "model not loaded" body; malformed
 * payloads answer 400; unknown paths 404. Request handling is bounded by a
 * counting semaphore so a flood of segment calls cannot exhaust memory with
 * decoded rasters.
 */
import * as http from "node:http";

import { type Backend, checkSegmentJob } from "./backend.js";
import { CodecError, ProtocolError } from "./errors.js";
import { decodePng } from "./png.js";
import {
  canonicalJson,
  errorToWire,
  infoToWire,
  parseJson,
  scoreLabelsRequestFromWire,
  scoreLabelsResponseToWire,
  segmentRequestFromWire,
  segmentResponseToWire,
} from "./protocol.js";

export const DEFAULT_MAX_CONCURRENT = 4;

class Semaphore {
  private waiters: (() => void)[] = [];

  constructor(private available: number) {}

  async acquire(): Promise<void> {
    if (this.available > 0) {
      this.available -= 1;
      return;
    }
    await new Promise<void>((resolve) => this.waiters.push(resolve));
  }

  release(): void {
    const next = this.waiters.shift();
    if (next) next();
    else this.available += 1;
  }
}

function readBody(req: http.IncomingMessage): Promise<Buffer> {
  return new Promise((resolve, reject) => {
    const parts: Buffer[] = [];
    req.on("data", (chunk: Buffer) => parts.push(chunk));
    req.on("end", () => resolve(Buffer.concat(parts)));
    req.on("error", reject);
  });
}

function send(res: http.ServerResponse, status: number, body: Buffer): void {
  res.writeHead(status, {
    "Content-Type": "application/json; charset=utf-8",
    "Content-Length": body.length,
  });
  res.end(body);
}

function sendError(res: http.ServerResponse, status: number, message: string): void {
  send(res, status, canonicalJson(errorToWire(message)));
}

export type ServerOptions = { maxConcurrent?: number };

export function createBridgeServer(backend: Backend, options: ServerOptions = {}): http.Server {
  const semaphore = new Semaphore(options.maxConcurrent ?? DEFAULT_MAX_CONCURRENT);

  async function segment(raw: Buffer): Promise<Buffer> {
    const wire = segmentRequestFromWire(parseJson(raw));
    const job = {
      image: decodePng(wire.imagePng),
      boxes: wire.boxes,
      text: wire.text,
      maxMasks: wire.maxMasks,
    };
    checkSegmentJob(job);
    const masks = await backend.segment(job);
    return canonicalJson(segmentResponseToWire(wire.requestId, masks));
  }

  async function scoreLabels(raw: Buffer): Promise<Buffer> {
    if (!(await backend.capabilities()).supportsLabelScoring) {
      throw new ProtocolError("label scoring unsupported");
    }
    const wire = scoreLabelsRequestFromWire(parseJson(raw));
    const job = { image: decodePng(wire.imagePng), box: wire.box, labels: wire.labels };
    const scores = await backend.scoreLabels(job);
    return canonicalJson(scoreLabelsResponseToWire(wire.requestId, scores));
  }

  return http.createServer((req, res) => {
    void (async () => {
      if (!backend.ready()) {
        sendError(res, 503, "model not loaded");
        return;
      }
      const path = req.url ?? "/";
      if (req.method === "GET") {
        if (path !== "/v1/info") {
          sendError(res, 404, `unknown path ${path}`);
          return;
        }
        send(res, 200, canonicalJson(infoToWire(await backend.capabilities())));
        return;
      }
      if (req.method !== "POST") {
        sendError(res, 501, `unsupported method ${req.method}`);
        return;
      }
      if (path !== "/v1/segment" && path !== "/v1/score_labels") {
        sendError(res, 404, `unknown path ${path}`);
        return;
      }
      const raw = await readBody(req);
      await semaphore.acquire();
      try {
        send(res, 200, path === "/v1/segment" ? await segment(raw) : await scoreLabels(raw));
      } catch (exc) {
        if (exc instanceof ProtocolError || exc instanceof CodecError) {
          sendError(res, 400, exc.message);
        } else {
          sendError(res, 500, String(exc instanceof Error ? exc.message : exc));
        }
      } finally {
        semaphore.release();
      }
    })().catch(() => res.destroy());
  });
}
