import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { afterEach, beforeEach, describe, expect, it } from 'vitest';

import { gaussianBlur3d, gaussianKernel } from '../src/gaussian.js';
import { DimsMismatchError, serveRequest } from '../src/serve.js';
import {
  Dims,
  VolumeFormatError,
  readFloatVolume,
  writeFloatVolume,
  writeMaskVolume,
} from '../src/volio.js';

let workDir: string;

beforeEach(() => {
  workDir = fs.mkdtempSync(path.join(os.tmpdir(), 'adapter-test-'));
});

afterEach(() => {
  fs.rmSync(workDir, { recursive: true, force: true });
});

function seededValues(n: number, scale = 1.0): Float32Array {
  // tiny deterministic LCG so tests never depend on Math.random
  const out = new Float32Array(n);
  let state = 123456789 >>> 0;
  for (let i = 0; i < n; i++) {
    state = (1664525 * state + 1013904223) >>> 0;
    out[i] = Math.fround(((state / 2 ** 32) - 0.5) * 2 * scale);
  }
  return out;
}

function writeRequest(
  dir: string,
  dims: Dims,
  corrupted: Float32Array,
  mask: Uint8Array,
  spacing: [number, number, number] = [1, 1, 1],
): void {
  fs.mkdirSync(dir, { recursive: true });
  writeFloatVolume(path.join(dir, 'corrupted.vol'), { dims, spacing, data: corrupted });
  writeFloatVolume(path.join(dir, 'guidance.vol'), {
    dims,
    spacing,
    data: new Float32Array(corrupted.length),
  });
  writeMaskVolume(path.join(dir, 'mask.vol'), { dims, spacing, data: mask });
  fs.writeFileSync(
    path.join(dir, 'manifest.json'),
    JSON.stringify({ request_id: path.basename(dir), dims, iteration: 0 }),
  );
}

describe('volume io', () => {
  it('round-trips float volumes bit-exactly', () => {
    const dims: Dims = [3, 4, 5];
    const data = seededValues(60);
    const volPath = path.join(workDir, 'x.vol');
    writeFloatVolume(volPath, { dims, spacing: [1, 1, 1], data });
    const back = readFloatVolume(volPath);
    expect(back.dims).toEqual(dims);
    expect(Buffer.from(back.data.buffer)).toEqual(Buffer.from(data.buffer));
  });

  it('rejects payload size mismatch', () => {
    const volPath = path.join(workDir, 'bad.vol');
    fs.writeFileSync(volPath, Buffer.alloc(10));
    fs.writeFileSync(path.join(workDir, 'bad.json'),
      JSON.stringify({ dims: [2, 2, 2], spacing: [1, 1, 1], dtype: 'f32' }));
    expect(() => readFloatVolume(volPath)).toThrow(VolumeFormatError);
  });
});

describe('echo model', () => {
  it('reproduces the corrupted volume bit-exactly', () => {
    const dims: Dims = [4, 4, 4];
    const corrupted = seededValues(64);
    const mask = new Uint8Array(64);
    mask.fill(1, 0, 32);
    const dir = path.join(workDir, 'req-echo');
    writeRequest(dir, dims, corrupted, mask);
    serveRequest(dir, { kind: 'echo' });
    const prediction = readFloatVolume(path.join(dir, 'prediction.vol'));
    expect(Buffer.from(prediction.data.buffer)).toEqual(Buffer.from(corrupted.buffer));
  });
});

describe('smooth model', () => {
  it('passes unmasked voxels through bit-exactly on an empty mask', () => {
    const dims: Dims = [4, 4, 4];
    const corrupted = seededValues(64);
    const dir = path.join(workDir, 'req-empty');
    writeRequest(dir, dims, corrupted, new Uint8Array(64));
    serveRequest(dir, { kind: 'smooth', sigmaMm: 2 });
    const prediction = readFloatVolume(path.join(dir, 'prediction.vol'));
    expect(Buffer.from(prediction.data.buffer)).toEqual(Buffer.from(corrupted.buffer));
  });

  it('matches a brute-force 3D Gaussian oracle inside the mask', () => {
    const dims: Dims = [9, 9, 9];
    const n = 9 * 9 * 9;
    const corrupted = new Float32Array(n);
    const center = 4 * 81 + 4 * 9 + 4;
    corrupted[center] = 1.0; // impulse inside the mask
    const mask = new Uint8Array(n).fill(1);
    const dir = path.join(workDir, 'req-smooth');
    writeRequest(dir, dims, corrupted, mask);
    serveRequest(dir, { kind: 'smooth', sigmaMm: 2 });
    const prediction = readFloatVolume(path.join(dir, 'prediction.vol'));

    // oracle: direct triple-loop convolution with the product kernel,
    // renormalized over in-bounds taps
    const kernel = gaussianKernel(2);
    const radius = (kernel.length - 1) / 2;
    for (let x = 0; x < 9; x++) {
      for (let y = 0; y < 9; y++) {
        for (let z = 0; z < 9; z++) {
          let acc = 0;
          let weight = 0;
          for (let i = -radius; i <= radius; i++) {
            for (let j = -radius; j <= radius; j++) {
              for (let k = -radius; k <= radius; k++) {
                const p = x + i, q = y + j, r = z + k;
                if (p < 0 || p >= 9 || q < 0 || q >= 9 || r < 0 || r >= 9) continue;
                const w = kernel[i + radius] * kernel[j + radius] * kernel[k + radius];
                acc += w * corrupted[p * 81 + q * 9 + r];
                weight += w;
              }
            }
          }
          const expected = acc / weight;
          const got = prediction.data[x * 81 + y * 9 + z];
          expect(Math.abs(got - expected)).toBeLessThan(1e-4);
        }
      }
    }
  });

  it('keeps unmasked voxels of a partial mask bit-exact', () => {
    const dims: Dims = [6, 6, 6];
    const corrupted = seededValues(216, 2.0);
    const mask = new Uint8Array(216);
    for (let i = 60; i < 140; i++) mask[i] = 1;
    const dir = path.join(workDir, 'req-partial');
    writeRequest(dir, dims, corrupted, mask);
    serveRequest(dir, { kind: 'smooth', sigmaMm: 1.5 });
    const prediction = readFloatVolume(path.join(dir, 'prediction.vol'));
    for (let i = 0; i < 216; i++) {
      if (!mask[i]) expect(prediction.data[i]).toBe(corrupted[i]);
    }
  });
});

describe('plugin model', () => {
  it('enforces the passthrough contract by overwriting unmasked voxels', () => {
    const dims: Dims = [3, 3, 3];
    const corrupted = seededValues(27);
    const mask = new Uint8Array(27);
    mask[13] = 1;
    const dir = path.join(workDir, 'req-plugin');
    writeRequest(dir, dims, corrupted, mask);
    // hostile plugin: rewrites everything
    serveRequest(dir, { kind: 'plugin', fn: (c) => new Float32Array(c.length).fill(9) });
    const prediction = readFloatVolume(path.join(dir, 'prediction.vol'));
    for (let i = 0; i < 27; i++) {
      expect(prediction.data[i]).toBe(i === 13 ? 9 : corrupted[i]);
    }
  });
});

describe('error handling', () => {
  it('reports missing files as VolumeFormatError', () => {
    const dir = path.join(workDir, 'req-missing');
    fs.mkdirSync(dir);
    fs.writeFileSync(path.join(dir, 'manifest.json'), JSON.stringify({ dims: [2, 2, 2] }));
    expect(() => serveRequest(dir, { kind: 'echo' })).toThrow(VolumeFormatError);
  });

  it('reports dims mismatch distinctly', () => {
    const dims: Dims = [3, 3, 3];
    const corrupted = seededValues(27);
    const dir = path.join(workDir, 'req-dims');
    writeRequest(dir, dims, corrupted, new Uint8Array(27));
    fs.writeFileSync(
      path.join(dir, 'manifest.json'),
      JSON.stringify({ request_id: 'x', dims: [4, 4, 4], iteration: 0 }),
    );
    expect(() => serveRequest(dir, { kind: 'echo' })).toThrow(DimsMismatchError);
  });
});
