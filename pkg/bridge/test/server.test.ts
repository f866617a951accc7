import type * as http from "node:http";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import type { Backend, ScoreJob, SegmentJob } from "../src/backend.js";
import { MockBackend } from "../src/mock.js";
import type { Capabilities, ScoredMask } from "../src/protocol.js";
import { createBridgeServer } from "../src/server.js";
import { golden } from "./helpers.js";

function listen(server: http.Server): Promise<string> {
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const address = server.address() as { port: number };
      resolve(`http://127.0.0.1:${address.port}`);
    });
  });
}

async function post(url: string, body: Buffer | string): Promise<[number, Buffer]> {
  const res = await fetch(url, { method: "POST", body });
  return [res.status, Buffer.from(await res.arrayBuffer())];
}

describe("bridge server with the mock backend", () => {
  let server: http.Server;
  let url: string;

  beforeAll(async () => {
    server = createBridgeServer(new MockBackend());
    url = await listen(server);
  });

  afterAll(() => {
    server.close();
  });

  it("answers /v1/info with the golden bytes and JSON content type", async () => {
    const res = await fetch(`${url}/v1/info`);
    expect(res.status).toBe(200);
    expect(res.headers.get("content-type")).toBe("application/json; charset=utf-8");
    expect(Buffer.from(await res.arrayBuffer())).toEqual(golden("info.json"));
  });

  it("answers the golden segment request with the golden response bytes", async () => {
    const [status, body] = await post(`${url}/v1/segment`, golden("segment_request.json"));
    expect(status).toBe(200);
    expect(body).toEqual(golden("segment_response.json"));
  });

  it("answers the golden score_labels request with the golden response bytes", async () => {
    const [status, body] = await post(
      `${url}/v1/score_labels`,
      golden("score_labels_request.json"),
    );
    expect(status).toBe(200);
    expect(body).toEqual(golden("score_labels_response.json"));
  });

  it("404s unknown paths, naming the path", async () => {
    const res = await fetch(`${url}/v1/bogus`);
    expect(res.status).toBe(404);
    expect(await res.text()).toBe('{"error":"unknown path /v1/bogus"}');
    const [postStatus, postBody] = await post(`${url}/v2/segment`, "{}");
    expect(postStatus).toBe(404);
    expect(postBody.toString()).toBe('{"error":"unknown path /v2/segment"}');
  });

  it("501s methods outside the protocol", async () => {
    const res = await fetch(`${url}/v1/segment`, { method: "PUT", body: "{}" });
    expect(res.status).toBe(501);
  });

  it("400s malformed JSON", async () => {
    const [status, body] = await post(`${url}/v1/segment`, "{nope");
    expect(status).toBe(400);
    expect(JSON.parse(body.toString()).error).toMatch(/malformed JSON body/);
  });

  it("400s bodies that are not valid UTF-8", async () => {
    const [status] = await post(`${url}/v1/segment`, Buffer.from([0x7b, 0xff, 0x7d]));
    expect(status).toBe(400);
  });

  it("400s an unparseable base64 image", async () => {
    const wire = JSON.parse(golden("segment_request.json").toString("utf8"));
    wire.image_png_b64 = "@@@@";
    const [status, body] = await post(`${url}/v1/segment`, JSON.stringify(wire));
    expect(status).toBe(400);
    expect(JSON.parse(body.toString()).error).toMatch(/invalid base64/);
  });

  it("400s boxes outside the image bounds", async () => {
    const wire = JSON.parse(golden("segment_request.json").toString("utf8"));
    wire.boxes = [{ x0: 0, y0: 0, x1: 17, y1: 5, polarity: "positive" }];
    const [status, body] = await post(`${url}/v1/segment`, JSON.stringify(wire));
    expect(status).toBe(400);
    expect(JSON.parse(body.toString()).error).toBe(
      "box (0, 0, 17, 5) outside image bounds 16x12",
    );
  });

  it("400s prompt-free segment requests", async () => {
    const wire = JSON.parse(golden("segment_request.json").toString("utf8"));
    wire.boxes = [{ x0: 12, y0: 1, x1: 15, y1: 5, polarity: "negative" }];
    wire.text = null;
    const [status, body] = await post(`${url}/v1/segment`, JSON.stringify(wire));
    expect(status).toBe(400);
    expect(JSON.parse(body.toString()).error).toBe(
      "segment request needs a positive box or a text label",
    );
  });

  it("400s unknown polarities", async () => {
    const wire = JSON.parse(golden("segment_request.json").toString("utf8"));
    wire.boxes[0].polarity = "maybe";
    const [status] = await post(`${url}/v1/segment`, JSON.stringify(wire));
    expect(status).toBe(400);
  });

  it("answers permuted request batches with identical bytes (statelessness)", async () => {
    const image = JSON.parse(golden("segment_request.json").toString("utf8")).image_png_b64;
    const requests: [string, string][] = [];
    for (let i = 0; i < 4; i++) {
      requests.push([
        "/v1/segment",
        JSON.stringify({
          request_id: `s${i}`,
          image_png_b64: image,
          boxes: [{ x0: i, y0: i, x1: i + 5, y1: i + 4, polarity: "positive" }],
          text: null,
          max_masks: 2,
        }),
      ]);
      requests.push([
        "/v1/score_labels",
        JSON.stringify({
          request_id: `l${i}`,
          image_png_b64: image,
          box: { x0: 0, y0: 0, x1: 4, y1: 4, polarity: "positive" },
          labels: [`label-${i}`, "dog", "vélo"],
        }),
      ]);
    }

    const serial: Buffer[] = [];
    for (const [path, body] of requests) {
      const [status, bytes] = await post(`${url}${path}`, body);
      expect(status).toBe(200);
      serial.push(bytes);
    }

    const shuffled = [...requests.keys()].reverse();
    const concurrent = await Promise.all(
      shuffled.map(async (i) => {
        const [path, body] = requests[i];
        const [status, bytes] = await post(`${url}${path}`, body);
        expect(status).toBe(200);
        return [i, bytes] as const;
      }),
    );
    for (const [i, bytes] of concurrent) {
      expect(bytes).toEqual(serial[i]);
    }
  });
});

describe("bridge server with a not-ready backend", () => {
  const down: Backend = {
    ready: () => false,
    capabilities: () => Promise.reject(new Error("unreachable")),
    segment: () => Promise.reject(new Error("unreachable")),
    scoreLabels: () => Promise.reject(new Error("unreachable")),
  };

  it("503s every endpoint with the canonical error body", async () => {
    const server = createBridgeServer(down);
    const url = await listen(server);
    try {
      for (const probe of [
        fetch(`${url}/v1/info`),
        fetch(`${url}/v1/segment`, { method: "POST", body: "{}" }),
        fetch(`${url}/v1/score_labels`, { method: "POST", body: "{}" }),
        fetch(`${url}/v1/bogus`),
      ]) {
        const res = await probe;
        expect(res.status).toBe(503);
        expect(Buffer.from(await res.arrayBuffer())).toEqual(golden("error.json"));
      }
    } finally {
      server.close();
    }
  });
});

describe("bounded request concurrency", () => {
  class GatedBackend implements Backend {
    active = 0;
    peak = 0;
    waiting: (() => void)[] = [];

    ready(): boolean {
      return true;
    }

    async capabilities(): Promise<Capabilities> {
      return {
        modelName: "gated",
        supportsText: true,
        supportsNegativeBoxes: true,
        supportsLabelScoring: true,
      };
    }

    async segment(job: SegmentJob): Promise<ScoredMask[]> {
      this.active += 1;
      this.peak = Math.max(this.peak, this.active);
      await new Promise<void>((resolve) => this.waiting.push(resolve));
      this.active -= 1;
      const pixels = job.image.width * job.image.height;
      return [{ mask: { size: [job.image.height, job.image.width], counts: [pixels] }, score: 0.5 }];
    }

    async scoreLabels(_job: ScoreJob): Promise<[string, number][]> {
      return [];
    }
  }

  it("never runs more than maxConcurrent requests at once", async () => {
    const backend = new GatedBackend();
    const server = createBridgeServer(backend, { maxConcurrent: 2 });
    const url = await listen(server);
    const body = golden("segment_request.json");
    try {
      const inFlight = Array.from({ length: 6 }, () => post(`${url}/v1/segment`, body));
      const deadline = Date.now() + 5000;
      while (backend.waiting.length < 2 && Date.now() < deadline) {
        await new Promise((resolve) => setTimeout(resolve, 5));
      }
      expect(backend.waiting.length).toBe(2); // only two got through the gate
      let released = 0;
      while (released < 6 && Date.now() < deadline) {
        const next = backend.waiting.shift();
        if (next) {
          next();
          released += 1;
        } else {
          await new Promise((resolve) => setTimeout(resolve, 5));
        }
      }
      const results = await Promise.all(inFlight);
      for (const [status] of results) expect(status).toBe(200);
      expect(backend.peak).toBe(2);
    } finally {
      server.close();
    }
  }, 15000);

  it("500s unexpected backend failures", async () => {
    const failing: Backend = {
      ready: () => true,
      capabilities: async () => ({
        modelName: "x",
        supportsText: true,
        supportsNegativeBoxes: true,
        supportsLabelScoring: true,
      }),
      segment: () => Promise.reject(new Error("GPU on fire")),
      scoreLabels: async () => [],
    };
    const server = createBridgeServer(failing);
    const url = await listen(server);
    try {
      const [status, body] = await post(`${url}/v1/segment`, golden("segment_request.json"));
      expect(status).toBe(500);
      expect(JSON.parse(body.toString()).error).toBe("GPU on fire");
    } finally {
      server.close();
    }
  });
});
