/** Deterministic surrogate backbone.
 *
 * Stands in for a pretrained vision-language encoder: every feature vector
 * is a counter-mode SHA-256 expansion of a key derived from the backbone
 * name, the role of the vector (global / local region r / text prompt) and
 * the image bytes or prompt string, unit-normalized. Identical inputs give
 * identical vectors on every platform; there is no model download, no
 * decoding, and no nondeterministic kernel anywhere in the path.
 *
 * The published grid geometry of the real encoders is kept so downstream
 * consumers see the shapes they would get from the genuine backbone: a
 * 224-pixel ViT-B/16 yields a 14x14 token grid with 512-dim projected
 * features, ViT-B/32 a 7x7 grid, RN50 a 7x7 attention-pool grid at 1024
 * dims. Local features correspond to the final-layer token grid, region
 * index r = h * W_map + w.
 */

import { createHash } from "node:crypto";

import { BackendError } from "./errors.js";

export interface BackboneSpec {
  readonly name: string;
  readonly D: number;
  readonly hLoc: number;
  readonly wMap: number;
}

export const BACKBONES: Record<string, BackboneSpec> = {
  "vit-b-16": { name: "vit-b-16", D: 512, hLoc: 14, wMap: 14 },
  "vit-b-32": { name: "vit-b-32", D: 512, hLoc: 7, wMap: 7 },
  "rn50": { name: "rn50", D: 1024, hLoc: 7, wMap: 7 },
};

export function getBackbone(name: string): BackboneSpec {
  const spec = BACKBONES[name];
  if (spec === undefined) {
    const known = Object.keys(BACKBONES).join(", ");
    throw new BackendError(`unknown backbone "${name}" (supported: ${known})`);
  }
  return spec;
}

/** One SHA-256 over all parts, NUL-separated so parts cannot run together. */
function keyOf(...parts: (string | Buffer)[]): Buffer {
  const h = createHash("sha256");
  for (const p of parts) {
    h.update(p);
    h.update(Buffer.from([0]));
  }
  return h.digest();
}

/** Expand a 32-byte key into D floats in [-0.5, 0.5), then L2-normalize.
 *
 * Each entry is (u32 >> 8) * 2^-24 - 0.5: a 24-bit value, exact in f32, so
 * the later f32 rounding on serialization loses nothing from the raw draw
 * (the normalization division is where rounding happens).
 */
function expandUnit(key: Buffer, D: number): Float64Array {
  const out = new Float64Array(D);
  const counter = Buffer.alloc(4);
  let filled = 0;
  for (let block = 0; filled < D; block++) {
    counter.writeUInt32BE(block, 0);
    const digest = createHash("sha256").update(key).update(counter).digest();
    for (let o = 0; o + 4 <= digest.length && filled < D; o += 4) {
      out[filled++] = (digest.readUInt32LE(o) >>> 8) * 2 ** -24 - 0.5;
    }
  }
  let s = 0;
  for (let d = 0; d < D; d++) s += out[d] * out[d];
  const n = Math.sqrt(s);
  if (n === 0) throw new BackendError("feature expansion yielded a zero vector");
  for (let d = 0; d < D; d++) out[d] /= n;
  return out;
}

export interface ImageFeatures {
  global: Float64Array;
  locals: Float64Array[]; // hLoc * wMap rows, region-major
}

export function imageFeatures(spec: BackboneSpec, content: Buffer): ImageFeatures {
  // hash the content once; per-region keys derive from the digest
  const contentKey = keyOf(spec.name, "content", content);
  const regions = spec.hLoc * spec.wMap;
  const locals = new Array<Float64Array>(regions);
  const idx = Buffer.alloc(4);
  for (let r = 0; r < regions; r++) {
    idx.writeUInt32BE(r, 0);
    locals[r] = expandUnit(keyOf(spec.name, "local", idx, contentKey), spec.D);
  }
  return {
    global: expandUnit(keyOf(spec.name, "global", contentKey), spec.D),
    locals,
  };
}

export const PROMPT_TEMPLATE = "a photo of a <class>";

/** Folder names use underscores; prompts want words. */
export function classPrompt(className: string): string {
  return PROMPT_TEMPLATE.replace("<class>", className.replace(/_/g, " "));
}

export function textFeature(spec: BackboneSpec, className: string): Float64Array {
  return expandUnit(keyOf(spec.name, "text", classPrompt(className)), spec.D);
}
