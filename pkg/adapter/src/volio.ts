/**
 * Little-endian volume payloads with JSON sidecars.
 *
 * Payload `<name>.vol` holds the raw grid in C order (x slowest); the sidecar
 * `<name>.json` carries {dims, spacing, dtype} with dtype "f32" or "u8".
 */

import * as fs from 'fs';
import * as path from 'path';

export type Dims = [number, number, number];

export interface Sidecar {
  dims: Dims;
  spacing: [number, number, number];
  dtype: 'f32' | 'u8';
}

export interface FloatVolume {
  dims: Dims;
  spacing: [number, number, number];
  data: Float32Array;
}

export interface MaskVolume {
  dims: Dims;
  spacing: [number, number, number];
  data: Uint8Array;
}

export class VolumeFormatError extends Error {}

function sidecarPath(volPath: string): string {
  const parsed = path.parse(volPath);
  return path.join(parsed.dir, parsed.name + '.json');
}

function readSidecar(volPath: string): Sidecar {
  const scPath = sidecarPath(volPath);
  if (!fs.existsSync(scPath)) {
    throw new VolumeFormatError(`missing sidecar: ${scPath}`);
  }
  let meta: any;
  try {
    meta = JSON.parse(fs.readFileSync(scPath, 'utf-8'));
  } catch (err) {
    throw new VolumeFormatError(`malformed sidecar ${scPath}: ${err}`);
  }
  if (!Array.isArray(meta.dims) || meta.dims.length !== 3) {
    throw new VolumeFormatError(`bad dims in ${scPath}`);
  }
  if (meta.dtype !== 'f32' && meta.dtype !== 'u8') {
    throw new VolumeFormatError(`unsupported dtype ${meta.dtype} in ${scPath}`);
  }
  const spacing = Array.isArray(meta.spacing) && meta.spacing.length === 3
    ? (meta.spacing.map(Number) as [number, number, number])
    : ([1, 1, 1] as [number, number, number]);
  return { dims: meta.dims.map(Number) as Dims, spacing, dtype: meta.dtype };
}

function voxelCount(dims: Dims): number {
  return dims[0] * dims[1] * dims[2];
}

export function readFloatVolume(volPath: string): FloatVolume {
  const meta = readSidecar(volPath);
  if (meta.dtype !== 'f32') {
    throw new VolumeFormatError(`${volPath}: expected f32 payload, got ${meta.dtype}`);
  }
  const raw = fs.readFileSync(volPath);
  const n = voxelCount(meta.dims);
  if (raw.byteLength !== n * 4) {
    throw new VolumeFormatError(
      `${volPath}: payload is ${raw.byteLength} bytes, dims ${meta.dims} require ${n * 4}`);
  }
  // copy to guarantee alignment regardless of Buffer pooling
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = raw.readFloatLE(i * 4);
  return { dims: meta.dims, spacing: meta.spacing, data };
}

export function readMaskVolume(volPath: string): MaskVolume {
  const meta = readSidecar(volPath);
  if (meta.dtype !== 'u8') {
    throw new VolumeFormatError(`${volPath}: expected u8 payload, got ${meta.dtype}`);
  }
  const raw = fs.readFileSync(volPath);
  const n = voxelCount(meta.dims);
  if (raw.byteLength !== n) {
    throw new VolumeFormatError(
      `${volPath}: payload is ${raw.byteLength} bytes, dims ${meta.dims} require ${n}`);
  }
  return { dims: meta.dims, spacing: meta.spacing, data: new Uint8Array(raw) };
}

export function writeFloatVolume(volPath: string, volume: FloatVolume): void {
  const buffer = Buffer.allocUnsafe(volume.data.length * 4);
  for (let i = 0; i < volume.data.length; i++) buffer.writeFloatLE(volume.data[i], i * 4);
  fs.writeFileSync(volPath, buffer);
  const sidecar: Sidecar = { dims: volume.dims, spacing: volume.spacing, dtype: 'f32' };
  fs.writeFileSync(sidecarPath(volPath), JSON.stringify(sidecar, Object.keys(sidecar).sort()) + '\n');
}

export function writeMaskVolume(volPath: string, mask: MaskVolume): void {
  fs.writeFileSync(volPath, Buffer.from(mask.data));
  const sidecar: Sidecar = { dims: mask.dims, spacing: mask.spacing, dtype: 'u8' };
  fs.writeFileSync(sidecarPath(volPath), JSON.stringify(sidecar, Object.keys(sidecar).sort()) + '\n');
}

export function sameDims(a: Dims, b: Dims): boolean {
  return a[0] === b[0] && a[1] === b[1] && a[2] === b[2];
}
