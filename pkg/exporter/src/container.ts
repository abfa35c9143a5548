/**
 * Reader/writer for the MAFT tensor container format.
 *
 * Layout: 4-byte magic "MAFT", uint32 LE version (1), uint64 LE header
 * length, UTF-8 JSON array of {name, dtype, shape, offset, nbytes}, then
 * raw little-endian row-major payloads. Every payload offset (relative to
 * the end of the header) is a multiple of 64 with zero padding between.
 */

import { promises as fs } from 'fs';
import { randomBytes } from 'crypto';
import * as path from 'path';

export const MAGIC = 'MAFT';
export const VERSION = 1;
export const ALIGNMENT = 64;

export type DType = 'float32' | 'uint8';

export interface TensorRecord {
  name: string;
  dtype: DType;
  shape: number[];
  /** Raw little-endian payload, length = product(shape) * itemsize. */
  data: Float32Array | Uint8Array;
}

const ITEM_SIZE: Record<DType, number> = { float32: 4, uint8: 1 };

export function floatRecord(name: string, shape: number[], values: ArrayLike<number>): TensorRecord {
  const data = Float32Array.from(values as number[]);
  checkLength(name, shape, data.length);
  return { name, dtype: 'float32', shape, data };
}

export function byteRecord(name: string, shape: number[], values: ArrayLike<number>): TensorRecord {
  const data = Uint8Array.from(values as number[]);
  checkLength(name, shape, data.length);
  return { name, dtype: 'uint8', shape, data };
}

function product(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

function checkLength(name: string, shape: number[], length: number): void {
  if (shape.length === 0 || shape.some((d) => !Number.isInteger(d) || d < 1)) {
    throw new Error(`record ${name}: bad shape [${shape}]`);
  }
  if (product(shape) !== length) {
    throw new Error(`record ${name}: shape [${shape}] does not match ${length} values`);
  }
}

function align(n: number): number {
  return Math.ceil(n / ALIGNMENT) * ALIGNMENT;
}

function payloadBytes(record: TensorRecord): Uint8Array {
  if (record.dtype === 'float32') {
    const data = record.data as Float32Array;
    const out = new Uint8Array(data.length * 4);
    const view = new DataView(out.buffer);
    for (let i = 0; i < data.length; i++) {
      if (!Number.isFinite(data[i])) {
        throw new Error(`record ${record.name}: non-finite float value at ${i}`);
      }
      view.setFloat32(i * 4, data[i], true);
    }
    return out;
  }
  return new Uint8Array(record.data as Uint8Array);
}

export function encodeContainer(records: TensorRecord[]): Uint8Array {
  const names = new Set<string>();
  const payloads: { offset: number; bytes: Uint8Array }[] = [];
  const entries: object[] = [];
  let offset = 0;
  for (const record of records) {
    if (names.has(record.name)) {
      throw new Error(`duplicate record name ${record.name}`);
    }
    names.add(record.name);
    checkLength(record.name, record.shape, record.data.length);
    const bytes = payloadBytes(record);
    entries.push({
      name: record.name,
      dtype: record.dtype,
      shape: record.shape,
      offset,
      nbytes: bytes.length,
    });
    payloads.push({ offset, bytes });
    offset = align(offset + bytes.length);
  }
  const header = new TextEncoder().encode(JSON.stringify(entries));
  const last = payloads[payloads.length - 1];
  const extent = last ? last.offset + last.bytes.length : 0;
  const out = new Uint8Array(16 + header.length + extent);
  const view = new DataView(out.buffer);
  out.set(new TextEncoder().encode(MAGIC), 0);
  view.setUint32(4, VERSION, true);
  view.setBigUint64(8, BigInt(header.length), true);
  out.set(header, 16);
  for (const { offset: off, bytes } of payloads) {
    out.set(bytes, 16 + header.length + off);
  }
  return out;
}

export function decodeContainer(raw: Uint8Array): TensorRecord[] {
  const magic = new TextDecoder().decode(raw.subarray(0, 4));
  if (magic !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}`);
  }
  if (raw.length < 16) {
    throw new Error('file ends inside the fixed header');
  }
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const version = view.getUint32(4, true);
  if (version !== VERSION) {
    throw new Error(`unsupported container version ${version}`);
  }
  const headerLen = Number(view.getBigUint64(8, true));
  if (raw.length < 16 + headerLen) {
    throw new Error('file ends inside the JSON header');
  }
  const entries = JSON.parse(new TextDecoder().decode(raw.subarray(16, 16 + headerLen)));
  if (!Array.isArray(entries)) {
    throw new Error('header must be a JSON array');
  }
  const base = 16 + headerLen;
  const records: TensorRecord[] = [];
  for (const entry of entries) {
    const { name, dtype, shape, offset, nbytes } = entry;
    if (dtype !== 'float32' && dtype !== 'uint8') {
      throw new Error(`record ${name}: unknown dtype ${dtype}`);
    }
    const expected = product(shape) * ITEM_SIZE[dtype as DType];
    if (nbytes !== expected) {
      throw new Error(`record ${name}: nbytes ${nbytes} does not match shape [${shape}]`);
    }
    if (base + offset + nbytes > raw.length) {
      throw new Error(`record ${name}: payload extends past end of file`);
    }
    const slice = raw.subarray(base + offset, base + offset + nbytes);
    if (dtype === 'float32') {
      const data = new Float32Array(product(shape));
      const pv = new DataView(slice.buffer, slice.byteOffset, slice.byteLength);
      for (let i = 0; i < data.length; i++) {
        data[i] = pv.getFloat32(i * 4, true);
      }
      records.push({ name, dtype, shape, data });
    } else {
      records.push({ name, dtype, shape, data: new Uint8Array(slice) });
    }
  }
  return records;
}

/** Atomic write: temp file in the target directory, then rename. */
export async function writeContainer(filePath: string, records: TensorRecord[]): Promise<void> {
  const bytes = encodeContainer(records);
  const dir = path.dirname(path.resolve(filePath));
  const tmp = path.join(dir, `.maft-${randomBytes(6).toString('hex')}`);
  await fs.writeFile(tmp, bytes);
  await fs.rename(tmp, filePath);
}

export async function readContainer(filePath: string): Promise<TensorRecord[]> {
  const raw = await fs.readFile(filePath);
  return decodeContainer(new Uint8Array(raw.buffer, raw.byteOffset, raw.byteLength));
}

export function findRecord(records: TensorRecord[], name: string): TensorRecord {
  const record = records.find((r) => r.name === name);
  if (!record) {
    throw new Error(`required record ${name} is missing`);
  }
  return record;
}
