/**
 * Request-directory server: one reconstruction per invocation.
 *
 * A request directory holds corrupted.vol, guidance.vol, mask.vol (uint8) and
 * manifest.json; the adapter writes prediction.vol (+ sidecar) back into it.
 * Voxels outside the mask are passed through bit-exactly for every model,
 * enforced after the model runs.
 */

import * as fs from 'fs';
import * as path from 'path';

import { gaussianBlur3d } from './gaussian.js';
import {
  Dims,
  FloatVolume,
  MaskVolume,
  VolumeFormatError,
  readFloatVolume,
  readMaskVolume,
  sameDims,
  writeFloatVolume,
} from './volio.js';

export const EXIT_OK = 0;
export const EXIT_BAD_REQUEST = 2;
export const EXIT_DIMS_MISMATCH = 3;

export type PluginFn = (
  corrupted: Float32Array,
  guidance: Float32Array,
  mask: Uint8Array,
  dims: Dims,
  spacing: [number, number, number],
) => Float32Array;

export type ModelSpec =
  | { kind: 'echo' }
  | { kind: 'smooth'; sigmaMm: number }
  | { kind: 'plugin'; fn: PluginFn };

export class DimsMismatchError extends Error {}

interface Request {
  corrupted: FloatVolume;
  guidance: FloatVolume;
  mask: MaskVolume;
  manifest: { request_id?: string; dims?: number[]; iteration?: number };
}

function readRequest(requestDir: string): Request {
  const manifestPath = path.join(requestDir, 'manifest.json');
  if (!fs.existsSync(manifestPath)) {
    throw new VolumeFormatError(`missing manifest: ${manifestPath}`);
  }
  let manifest: Request['manifest'];
  try {
    manifest = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'));
  } catch (err) {
    throw new VolumeFormatError(`malformed manifest ${manifestPath}: ${err}`);
  }
  const corrupted = readFloatVolume(path.join(requestDir, 'corrupted.vol'));
  const guidance = readFloatVolume(path.join(requestDir, 'guidance.vol'));
  const mask = readMaskVolume(path.join(requestDir, 'mask.vol'));
  if (!sameDims(corrupted.dims, guidance.dims) || !sameDims(corrupted.dims, mask.dims)) {
    throw new DimsMismatchError(
      `dims disagree: corrupted ${corrupted.dims}, guidance ${guidance.dims}, mask ${mask.dims}`);
  }
  if (manifest.dims && !sameDims(manifest.dims as Dims, corrupted.dims)) {
    throw new DimsMismatchError(
      `manifest dims ${manifest.dims} disagree with payload dims ${corrupted.dims}`);
  }
  return { corrupted, guidance, mask, manifest };
}

function predict(model: ModelSpec, request: Request): Float32Array {
  const { corrupted, guidance, mask } = request;
  switch (model.kind) {
    case 'echo':
      return Float32Array.from(corrupted.data);
    case 'smooth':
      return gaussianBlur3d(corrupted.data, corrupted.dims, corrupted.spacing, model.sigmaMm);
    case 'plugin':
      return model.fn(
        Float32Array.from(corrupted.data),
        Float32Array.from(guidance.data),
        Uint8Array.from(mask.data),
        corrupted.dims,
        corrupted.spacing,
      );
  }
}

/** Serve one request directory; returns the prediction it wrote. */
export function serveRequest(requestDir: string, model: ModelSpec): FloatVolume {
  const request = readRequest(requestDir);
  const raw = predict(model, request);
  if (raw.length !== request.corrupted.data.length) {
    throw new DimsMismatchError(
      `model returned ${raw.length} voxels, expected ${request.corrupted.data.length}`);
  }
  // Passthrough contract: only masked voxels may differ from the input.
  const out = Float32Array.from(request.corrupted.data);
  const mask = request.mask.data;
  for (let i = 0; i < out.length; i++) {
    if (mask[i]) out[i] = raw[i];
  }
  const prediction: FloatVolume = {
    dims: request.corrupted.dims,
    spacing: request.corrupted.spacing,
    data: out,
  };
  writeFloatVolume(path.join(requestDir, 'prediction.vol'), prediction);
  return prediction;
}
