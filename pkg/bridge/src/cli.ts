/**
 * Entry point: serve the wire protocol (mock or checkpoint mode), or convert
 * PASCAL VOC ground truth into a COCO manifest.
 *
 *   node dist/cli.js --mock [--port N]
 *   node dist/cli.js --checkpoint PATH [--device D] [--port N] [--max-concurrent N]
 *   node dist/cli.js convert-pascal --voc-root DIR [--sds-root DIR] [--split S] --out FILE
 */
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import type { Backend } from "./backend.js";
import { convertPascalToFile } from "./convertPascal.js";
import { ConversionError } from "./errors.js";
import { MockBackend } from "./mock.js";
import { ModelBackend } from "./model.js";
import { createBridgeServer, DEFAULT_MAX_CONCURRENT } from "./server.js";

const USAGE = `usage: sam3-bridge [serve] (--mock | --checkpoint PATH)
                   [--host ADDR] [--port N] [--device D] [--max-concurrent N]
       sam3-bridge convert-pascal --voc-root DIR [--sds-root DIR]
                   [--split NAME] --out FILE`;

function fail(message: string): number {
  process.stderr.write(`${message}\n${USAGE}\n`);
  return 1;
}

async function serve(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      mock: { type: "boolean", default: false },
      checkpoint: { type: "string" },
      host: { type: "string", default: "127.0.0.1" },
      port: { type: "string", default: "0" },
      device: { type: "string", default: "cpu" },
      "max-concurrent": { type: "string", default: String(DEFAULT_MAX_CONCURRENT) },
    },
  });
  if (values.mock === (values.checkpoint !== undefined)) {
    return fail("exactly one of --mock and --checkpoint is required");
  }
  const port = Number(values.port);
  const maxConcurrent = Number(values["max-concurrent"]);
  if (!Number.isInteger(port) || port < 0 || !Number.isInteger(maxConcurrent) || maxConcurrent < 1) {
    return fail("--port and --max-concurrent must be non-negative integers");
  }

  let backend: Backend;
  if (values.mock) {
    backend = new MockBackend();
  } else {
    const model = new ModelBackend(values.checkpoint!, values.device!);
    const error = await model.init();
    if (error !== null) {
      process.stderr.write(`model load failed: ${error}; serving 503s\n`);
    }
    backend = model;
  }

  const server = createBridgeServer(backend, { maxConcurrent });
  await new Promise<void>((resolve) => server.listen(port, values.host, resolve));
  const address = server.address();
  const boundPort = typeof address === "object" && address !== null ? address.port : port;
  process.stdout.write(`serving http://${values.host}:${boundPort}\n`);

  await new Promise<void>((resolve) => {
    process.on("SIGINT", resolve);
    process.on("SIGTERM", resolve);
  });
  server.close();
  return 0;
}

function convert(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      "voc-root": { type: "string" },
      "sds-root": { type: "string" },
      split: { type: "string", default: "trainval" },
      out: { type: "string" },
    },
  });
  if (values["voc-root"] === undefined || values.out === undefined) {
    return fail("convert-pascal requires --voc-root and --out");
  }
  try {
    const summary = convertPascalToFile(
      { vocRoot: values["voc-root"], sdsRoot: values["sds-root"], split: values.split },
      values.out,
    );
    process.stdout.write(
      `wrote ${values.out}: ${summary.images} images, ${summary.annotations} annotations, ` +
        `${summary.categories} categories (${summary.skippedInstances} instances skipped)\n`,
    );
    return 0;
  } catch (exc) {
    if (exc instanceof ConversionError) {
      process.stderr.write(`${exc.message}\n`);
      return 1;
    }
    throw exc;
  }
}

export async function main(argv: string[]): Promise<number> {
  try {
    if (argv[0] === "convert-pascal") return convert(argv.slice(1));
    return await serve(argv[0] === "serve" ? argv.slice(1) : argv);
  } catch (exc) {
    return fail(String(exc instanceof Error ? exc.message : exc));
  }
}

if (process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
