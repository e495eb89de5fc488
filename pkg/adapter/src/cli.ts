#!/usr/bin/env node
/**
 * itermask-adapter --model echo|smooth|plugin:<path> [--sigma MM] <request-dir>
 *
 * Exit codes: 0 success, 2 missing/invalid request files, 3 dims mismatch.
 */

import * as fs from 'fs';
import { pathToFileURL } from 'url';

import {
  DimsMismatchError,
  EXIT_BAD_REQUEST,
  EXIT_DIMS_MISMATCH,
  ModelSpec,
  PluginFn,
  serveRequest,
} from './serve.js';
import { VolumeFormatError } from './volio.js';

function usage(): never {
  process.stderr.write(
    'usage: itermask-adapter --model echo|smooth|plugin:<path> [--sigma MM] <request-dir>\n');
  process.exit(EXIT_BAD_REQUEST);
}

async function parseModel(spec: string, sigmaMm: number): Promise<ModelSpec> {
  if (spec === 'echo') return { kind: 'echo' };
  if (spec === 'smooth') {
    if (!(sigmaMm > 0)) {
      process.stderr.write(`smooth model needs --sigma > 0, got ${sigmaMm}\n`);
      process.exit(EXIT_BAD_REQUEST);
    }
    return { kind: 'smooth', sigmaMm };
  }
  if (spec.startsWith('plugin:')) {
    const modulePath = spec.slice('plugin:'.length);
    const loaded = await import(pathToFileURL(modulePath).href);
    const fn: PluginFn = loaded.default ?? loaded.predict;
    if (typeof fn !== 'function') {
      process.stderr.write(`plugin ${modulePath} exports no default function\n`);
      process.exit(EXIT_BAD_REQUEST);
    }
    return { kind: 'plugin', fn };
  }
  process.stderr.write(`unknown model ${spec}\n`);
  return usage();
}

async function main(argv: string[]): Promise<number> {
  let model = '';
  let sigmaMm = 2.0;
  let requestDir = '';
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === '--model') model = argv[++i] ?? '';
    else if (arg === '--sigma') sigmaMm = Number(argv[++i]);
    else if (arg.startsWith('-')) usage();
    else requestDir = arg;
  }
  if (!model || !requestDir) usage();
  if (!fs.existsSync(requestDir) || !fs.statSync(requestDir).isDirectory()) {
    process.stderr.write(`request directory not found: ${requestDir}\n`);
    return EXIT_BAD_REQUEST;
  }
  const spec = await parseModel(model, sigmaMm);
  try {
    serveRequest(requestDir, spec);
  } catch (err) {
    if (err instanceof DimsMismatchError) {
      process.stderr.write(`${err.message}\n`);
      return EXIT_DIMS_MISMATCH;
    }
    if (err instanceof VolumeFormatError) {
      process.stderr.write(`${err.message}\n`);
      return EXIT_BAD_REQUEST;
    }
    process.stderr.write(`${err}\n`);
    return EXIT_BAD_REQUEST;
  }
  return 0;
}

main(process.argv.slice(2)).then((code) => process.exit(code));
