/**
 * Checkpoint-backed backend. The actual SAM3 runtime is loaded dynamically
 * (or injected, which is how tests exercise this path without weights); when
 * loading fails the backend stays not-ready and the server answers every
 * endpoint with 503 until restarted with a working checkpoint.
 *
 * Label scoring is implemented on top of segmentation: one pass per
 * candidate label prompted with that label's text on the query box, scored
 * by the best mask confidence returned. Negative boxes are forwarded to the
 * runtime verbatim; whether they suppress anything is the model's business,
 * and the capability flags report what the runtime declares rather than
 * pretending.
 */
import type { Backend, ScoreJob, SegmentJob } from "./backend.js";
import type { Capabilities, ScoredMask } from "./protocol.js";

/** What a loaded checkpoint must provide. */
export interface Sam3Model {
  modelName: string;
  supportsText: boolean;
  supportsNegativeBoxes: boolean;
  segment(job: SegmentJob): Promise<ScoredMask[]>;
}

export interface Sam3Runtime {
  load(checkpoint: string, device: string): Promise<Sam3Model>;
}

// resolved at runtime on purpose: the package only exists on machines with
// model serving installed, and a static import would fail compilation
const RUNTIME_MODULE = "sam3-runtime";

async function defaultRuntime(): Promise<Sam3Runtime> {
  const mod = (await import(RUNTIME_MODULE)) as { runtime?: Sam3Runtime };
  if (!mod.runtime) {
    throw new Error(`module '${RUNTIME_MODULE}' exports no runtime`);
  }
  return mod.runtime;
}

export class ModelBackend implements Backend {
  private model: Sam3Model | null = null;
  private queue: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly checkpoint: string,
    private readonly device: string,
    private readonly runtime?: Sam3Runtime,
  ) {}

  /** Returns an error message on failure instead of throwing; the server
   *  keeps running in not-ready state either way. */
  async init(): Promise<string | null> {
    try {
      const runtime = this.runtime ?? (await defaultRuntime());
      this.model = await runtime.load(this.checkpoint, this.device);
      return null;
    } catch (exc) {
      this.model = null;
      return String(exc instanceof Error ? exc.message : exc);
    }
  }

  ready(): boolean {
    return this.model !== null;
  }

  private get loaded(): Sam3Model {
    if (this.model === null) throw new Error("model not loaded");
    return this.model;
  }

  /** One inference at a time per device; requests queue in arrival order. */
  private serialized<T>(fn: () => Promise<T>): Promise<T> {
    const next = this.queue.then(fn, fn);
    this.queue = next.catch(() => undefined);
    return next;
  }

  async capabilities(): Promise<Capabilities> {
    const model = this.loaded;
    return {
      modelName: model.modelName,
      supportsText: model.supportsText,
      supportsNegativeBoxes: model.supportsNegativeBoxes,
      supportsLabelScoring: model.supportsText, // scoring rides on text prompts
    };
  }

  segment(job: SegmentJob): Promise<ScoredMask[]> {
    return this.serialized(() => this.loaded.segment(job));
  }

  scoreLabels(job: ScoreJob): Promise<[string, number][]> {
    return this.serialized(async () => {
      const scored: [string, number][] = [];
      for (const label of job.labels) {
        const masks = await this.loaded.segment({
          image: job.image,
          boxes: [[job.box, "positive"]],
          text: label,
          maxMasks: 1,
        });
        scored.push([label, masks.reduce((best, m) => Math.max(best, m.score), 0)]);
      }
      scored.sort(([la, sa], [lb, sb]) =>
        sa !== sb ? sb - sa : Buffer.compare(Buffer.from(la, "utf8"), Buffer.from(lb, "utf8")),
      );
      return scored;
    });
  }
}
