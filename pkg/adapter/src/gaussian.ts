/**
 * Separable 3D Gaussian smoothing on a flat C-order grid.
 *
 * Sigma is given in millimetres and converted per axis via the voxel spacing.
 * Kernels are truncated at three sigma and renormalized over in-bounds taps
 * at the borders, so the filter preserves constants everywhere.
 */

import { Dims } from './volio.js';

export function gaussianKernel(sigmaVox: number): Float64Array {
  const radius = Math.max(1, Math.ceil(3 * sigmaVox));
  const kernel = new Float64Array(2 * radius + 1);
  let total = 0;
  for (let i = -radius; i <= radius; i++) {
    const w = Math.exp(-(i * i) / (2 * sigmaVox * sigmaVox));
    kernel[i + radius] = w;
    total += w;
  }
  for (let i = 0; i < kernel.length; i++) kernel[i] /= total;
  return kernel;
}

function convolveAxis(
  src: Float64Array,
  dims: Dims,
  axis: number,
  kernel: Float64Array,
): Float64Array {
  const [nx, ny, nz] = dims;
  const strides = [ny * nz, nz, 1];
  const n = [nx, ny, nz][axis];
  const stride = strides[axis];
  const radius = (kernel.length - 1) / 2;
  const out = new Float64Array(src.length);

  for (let x = 0; x < nx; x++) {
    for (let y = 0; y < ny; y++) {
      for (let z = 0; z < nz; z++) {
        const index = x * strides[0] + y * strides[1] + z;
        const pos = [x, y, z][axis];
        let acc = 0;
        let weight = 0;
        const lo = Math.max(-radius, -pos);
        const hi = Math.min(radius, n - 1 - pos);
        for (let k = lo; k <= hi; k++) {
          const w = kernel[k + radius];
          acc += w * src[index + k * stride];
          weight += w;
        }
        out[index] = acc / weight;
      }
    }
  }
  return out;
}

export function gaussianBlur3d(
  data: Float32Array,
  dims: Dims,
  spacing: [number, number, number],
  sigmaMm: number,
): Float32Array {
  if (!(sigmaMm > 0)) {
    throw new Error(`sigma must be > 0 mm, got ${sigmaMm}`);
  }
  let work: Float64Array = Float64Array.from(data);
  for (let axis = 0; axis < 3; axis++) {
    const sigmaVox = sigmaMm / spacing[axis];
    work = convolveAxis(work, dims, axis, gaussianKernel(sigmaVox));
  }
  return Float32Array.from(work);
}
