/** Walk a class-per-folder image tree and emit `.sbcp` embedding files.
 *
 * The train file holds up to `shots` images per class (a cap, not a
 * requirement); when `outTest` is given the images left over after the cap
 * go there. The text file carries one frozen feature per class from the
 * fixed prompt template and no records (N = 0). Shot sampling is a hash
 * ranking keyed by (seed, class, filename), so the same job and seed pick
 * the same images regardless of filesystem enumeration order.
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

import {
  BackboneSpec,
  getBackbone,
  imageFeatures,
  textFeature,
} from "./backbone.js";
import { JobError, UsageError } from "./errors.js";
import {
  FLAG_LOCALS,
  FLAG_PRE_NORMALIZED,
  SbcpRecord,
  encodeSbcp,
} from "./sbcp.js";

const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"]);

export interface ExtractionJob {
  imageRoot: string;
  backbone: string;
  outTrain: string;
  outText: string;
  outTest?: string; // leftovers after the shot cap; requires shots
  shots?: number; // per-class cap; absent means take everything
  seed: number;
  device?: string; // interface parity; the surrogate backbone ignores it
}

export interface ClassSummary {
  name: string;
  available: number;
  train: number;
  test: number;
}

export interface ExtractSummary {
  backbone: BackboneSpec;
  classes: ClassSummary[];
  nTrain: number;
  nTest: number;
  files: string[];
}

function listClassFolders(root: string): string[] {
  let entries: fs.Dirent[];
  try {
    entries = fs.readdirSync(root, { withFileTypes: true });
  } catch (err) {
    throw new JobError(`cannot list image root ${root}: ${(err as Error).message}`);
  }
  const names = entries.filter((e) => e.isDirectory()).map((e) => e.name);
  names.sort();
  if (names.length < 2) {
    throw new JobError(
      `image root ${root} has ${names.length} class folder(s); the format needs at least 2`,
    );
  }
  return names;
}

function listImages(dir: string): string[] {
  const files = fs
    .readdirSync(dir, { withFileTypes: true })
    .filter((e) => e.isFile() && IMAGE_EXTENSIONS.has(path.extname(e.name).toLowerCase()))
    .map((e) => e.name);
  files.sort();
  if (files.length === 0) {
    throw new JobError(`class folder ${dir} has no images`);
  }
  return files;
}

/** Rank filenames by a seed-keyed hash and split at the shot cap. */
function splitShots(
  seed: number,
  className: string,
  files: string[],
  shots: number | undefined,
): { train: string[]; test: string[] } {
  if (shots === undefined || shots >= files.length) {
    return { train: files, test: [] };
  }
  if (shots < 1) throw new UsageError(`shots must be >= 1, got ${shots}`);
  const rank = new Map(
    files.map((f) => {
      const h = createHash("sha256")
        .update(`${seed}\0${className}\0${f}`)
        .digest("hex");
      return [f, h] as const;
    }),
  );
  const picked = [...files].sort((a, b) => rank.get(a)!.localeCompare(rank.get(b)!));
  const chosen = new Set(picked.slice(0, shots));
  // keep filename order inside each split so output is stable to re-listing
  return {
    train: files.filter((f) => chosen.has(f)),
    test: files.filter((f) => !chosen.has(f)),
  };
}

function recordFor(spec: BackboneSpec, label: number, file: string): SbcpRecord {
  let content: Buffer;
  try {
    content = fs.readFileSync(file);
  } catch (err) {
    throw new JobError(`cannot read image ${file}: ${(err as Error).message}`);
  }
  const feats = imageFeatures(spec, content);
  return { label, global: feats.global, locals: feats.locals };
}

function writeFileAtomic(p: string, data: Buffer): void {
  fs.mkdirSync(path.dirname(path.resolve(p)), { recursive: true });
  fs.writeFileSync(p, data);
}

export function extract(job: ExtractionJob): ExtractSummary {
  const spec = getBackbone(job.backbone);
  if (job.outTest !== undefined && job.shots === undefined) {
    throw new UsageError("a test split needs a shot cap (pass shots with outTest)");
  }
  const classNames = listClassFolders(job.imageRoot);

  const classTable = classNames.map((name) => textFeature(spec, name));
  const trainRecords: SbcpRecord[] = [];
  const testRecords: SbcpRecord[] = [];
  const classes: ClassSummary[] = [];

  classNames.forEach((name, label) => {
    const dir = path.join(job.imageRoot, name);
    const files = listImages(dir);
    const { train, test } = splitShots(job.seed, name, files, job.shots);
    for (const f of train) trainRecords.push(recordFor(spec, label, path.join(dir, f)));
    if (job.outTest !== undefined) {
      for (const f of test) testRecords.push(recordFor(spec, label, path.join(dir, f)));
    }
    classes.push({ name, available: files.length, train: train.length, test: test.length });
  });

  const base = {
    version: 1,
    D: spec.D,
    K: classNames.length,
    hLoc: spec.hLoc,
    wMap: spec.wMap,
  };
  const files: string[] = [];

  const trainHeader = {
    ...base,
    N: trainRecords.length,
    flags: FLAG_LOCALS | FLAG_PRE_NORMALIZED,
  };
  writeFileAtomic(job.outTrain, encodeSbcp(trainHeader, classTable, trainRecords));
  files.push(job.outTrain);

  const textHeader = { ...base, N: 0, flags: FLAG_PRE_NORMALIZED };
  writeFileAtomic(job.outText, encodeSbcp(textHeader, classTable, []));
  files.push(job.outText);

  if (job.outTest !== undefined) {
    const testHeader = {
      ...base,
      N: testRecords.length,
      flags: FLAG_LOCALS | FLAG_PRE_NORMALIZED,
    };
    writeFileAtomic(job.outTest, encodeSbcp(testHeader, classTable, testRecords));
    files.push(job.outTest);
  }

  return {
    backbone: spec,
    classes,
    nTrain: trainRecords.length,
    nTest: testRecords.length,
    files,
  };
}
