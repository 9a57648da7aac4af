/** Binary `.sbcp` embedding container, writer and reader.
 *
 * Layout (integers u32 LE, floats f32 LE):
 *
 *     bytes 0..3   magic "SBCP"
 *     7 x u32      version (=1), D, K, H_loc, W_map, N, flags
 *     K*D f32      class table, row-major
 *     N records    u32 label, D f32 global feature, and when flag bit0 is
 *                  set H_loc*W_map*D f32 local features (region-major)
 *
 * Flag bit0 = locals present, bit1 = rows stored pre-normalized. N = 0 is
 * the convention for frozen-text files (class table only). The byte layout
 * must match the consuming engine exactly; sizes are computed up front and
 * every write lands at a fixed offset, so identical inputs give identical
 * bytes.
 */

import { UsageError } from "./errors.js";

export const MAGIC = "SBCP";
export const VERSION = 1;
export const FLAG_LOCALS = 1;
export const FLAG_PRE_NORMALIZED = 2;

const HEADER_SIZE = 4 + 7 * 4;

export interface SbcpHeader {
  version: number;
  D: number;
  K: number;
  hLoc: number;
  wMap: number;
  N: number;
  flags: number;
}

export interface SbcpRecord {
  label: number;
  global: Float64Array;
  locals: Float64Array[]; // empty when flag bit0 is unset
}

function regionCount(h: SbcpHeader): number {
  return h.flags & FLAG_LOCALS ? h.hLoc * h.wMap : 0;
}

export function byteSize(h: SbcpHeader): number {
  const rec = 4 + 4 * h.D + 4 * regionCount(h) * h.D;
  return HEADER_SIZE + 4 * h.K * h.D + h.N * rec;
}

function putRow(buf: Buffer, off: number, row: Float64Array, D: number): number {
  if (row.length !== D) {
    throw new UsageError(`feature row has ${row.length} entries, header says D=${D}`);
  }
  for (let d = 0; d < D; d++) off = buf.writeFloatLE(row[d], off);
  return off;
}

export function encodeSbcp(
  h: SbcpHeader,
  classTable: Float64Array[],
  records: SbcpRecord[],
): Buffer {
  if (classTable.length !== h.K) {
    throw new UsageError(`class table has ${classTable.length} rows, header says K=${h.K}`);
  }
  if (records.length !== h.N) {
    throw new UsageError(`${records.length} records, header says N=${h.N}`);
  }
  const R = regionCount(h);
  const buf = Buffer.alloc(byteSize(h));
  let off = buf.write(MAGIC, 0, "ascii");
  for (const v of [h.version, h.D, h.K, h.hLoc, h.wMap, h.N, h.flags]) {
    off = buf.writeUInt32LE(v, off);
  }
  for (const row of classTable) off = putRow(buf, off, row, h.D);
  for (const rec of records) {
    if (rec.label < 0 || rec.label >= h.K) {
      throw new UsageError(`label ${rec.label} outside [0, ${h.K})`);
    }
    off = buf.writeUInt32LE(rec.label, off);
    off = putRow(buf, off, rec.global, h.D);
    if (rec.locals.length !== R) {
      throw new UsageError(`record has ${rec.locals.length} local rows, expected ${R}`);
    }
    for (const loc of rec.locals) off = putRow(buf, off, loc, h.D);
  }
  return buf;
}

export interface SbcpFile {
  header: SbcpHeader;
  classTable: Float64Array[];
  records: SbcpRecord[];
}

/** Strict inverse of encodeSbcp; rejects bad magic, version, or length. */
export function decodeSbcp(buf: Buffer): SbcpFile {
  if (buf.length < HEADER_SIZE) {
    throw new UsageError(`file too short for header (${buf.length} bytes)`);
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new UsageError(`bad magic, expected "${MAGIC}"`);
  }
  const u32 = (i: number) => buf.readUInt32LE(4 + 4 * i);
  const header: SbcpHeader = {
    version: u32(0), D: u32(1), K: u32(2), hLoc: u32(3),
    wMap: u32(4), N: u32(5), flags: u32(6),
  };
  if (header.version !== VERSION) {
    throw new UsageError(`unsupported version ${header.version}`);
  }
  if (buf.length !== byteSize(header)) {
    throw new UsageError(`file is ${buf.length} bytes, header declares ${byteSize(header)}`);
  }
  let off = HEADER_SIZE;
  const readRow = (): Float64Array => {
    const row = new Float64Array(header.D);
    for (let d = 0; d < header.D; d++) {
      row[d] = buf.readFloatLE(off);
      off += 4;
    }
    return row;
  };
  const classTable = Array.from({ length: header.K }, readRow);
  const R = regionCount(header);
  const records = Array.from({ length: header.N }, () => {
    const label = buf.readUInt32LE(off);
    off += 4;
    const global = readRow();
    const locals = Array.from({ length: R }, readRow);
    return { label, global, locals };
  });
  return { header, classTable, records };
}
