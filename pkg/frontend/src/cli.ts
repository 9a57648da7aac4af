#!/usr/bin/env node
/** Command-line surface. One subcommand:
 *
 *     sbcp-extract extract --images DIR --backbone NAME [--shots N]
 *                  [--seed S] --out-train P --out-text P [--out-test P]
 *
 * Mirrors the consuming engine's conventions: the resolved configuration is
 * echoed as one `resolved-config:` JSON line before any work, and exit
 * codes are 0 success, 1 usage or configuration error, 2 data or backend
 * error.
 */

import { realpathSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { BackendError, JobError, UsageError } from "./errors.js";
import { ExtractionJob, extract } from "./extract.js";

const USAGE =
  "usage: sbcp-extract extract --images DIR --backbone NAME [--shots N] " +
  "[--seed S] --out-train PATH --out-text PATH [--out-test PATH] [--device HINT]";

function parseIntFlag(name: string, raw: string): number {
  const v = Number(raw);
  if (!Number.isInteger(v) || v < 0) {
    throw new UsageError(`--${name} must be a non-negative integer, got "${raw}"`);
  }
  return v;
}

function buildJob(argv: string[]): ExtractionJob {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        images: { type: "string" },
        backbone: { type: "string" },
        shots: { type: "string" },
        seed: { type: "string" },
        "out-train": { type: "string" },
        "out-text": { type: "string" },
        "out-test": { type: "string" },
        device: { type: "string" },
      },
    });
  } catch (err) {
    throw new UsageError((err as Error).message);
  }
  if (parsed.positionals.length !== 1 || parsed.positionals[0] !== "extract") {
    throw new UsageError(USAGE);
  }
  const v = parsed.values;
  for (const req of ["images", "backbone", "out-train", "out-text"] as const) {
    if (v[req] === undefined) throw new UsageError(`missing required flag --${req}`);
  }
  return {
    imageRoot: v.images!,
    backbone: v.backbone!,
    outTrain: v["out-train"]!,
    outText: v["out-text"]!,
    outTest: v["out-test"],
    shots: v.shots === undefined ? undefined : parseIntFlag("shots", v.shots),
    seed: v.seed === undefined ? 0 : parseIntFlag("seed", v.seed),
    device: v.device,
  };
}

function echoConfig(job: ExtractionJob): void {
  const cfg: Record<string, unknown> = {
    backbone: job.backbone,
    command: "extract",
    device: job.device ?? null,
    images: job.imageRoot,
    out_test: job.outTest ?? null,
    out_text: job.outText,
    out_train: job.outTrain,
    seed: job.seed,
    shots: job.shots ?? null,
  };
  console.log(`resolved-config: ${JSON.stringify(cfg)}`);
}

export function main(argv: string[]): number {
  let job: ExtractionJob;
  try {
    job = buildJob(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  echoConfig(job);
  try {
    const summary = extract(job);
    for (const c of summary.classes) {
      console.log(
        `class ${c.name}: ${c.available} images, ${c.train} train` +
          (job.outTest !== undefined ? `, ${c.test} test` : ""),
      );
    }
    console.log(`train: ${job.outTrain} (N=${summary.nTrain}, K=${summary.classes.length})`);
    console.log(`text: ${job.outText} (K=${summary.classes.length})`);
    if (job.outTest !== undefined) {
      console.log(`test: ${job.outTest} (N=${summary.nTest})`);
    }
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    if (err instanceof JobError || err instanceof BackendError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

const entry = process.argv[1];
if (entry !== undefined) {
  let isEntry = false;
  try {
    // realpath because bin shims are symlinks while import.meta.url is real
    isEntry = import.meta.url === pathToFileURL(realpathSync(entry)).href;
  } catch {
    isEntry = false;
  }
  if (isEntry) process.exit(main(process.argv.slice(2)));
}
