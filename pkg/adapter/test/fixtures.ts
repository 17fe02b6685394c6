/** Test fixture builders: a minimal .npy serializer and .npz packing,
 * plus tiny readers for the emitted interchange files. Written
 * independently of the production code so round trips are meaningful. */

import { zipSync } from 'fflate'
import * as fs from 'node:fs'

type Dtype = '<f4' | '<f8' | '|u1'

export function npyBytes(dtype: Dtype, shape: number[], values: number[]): Uint8Array {
  const count = shape.reduce((a, b) => a * b, 1)
  if (values.length !== count) throw new Error(`need ${count} values, got ${values.length}`)
  let header = `{'descr': '${dtype}', 'fortran_order': False, 'shape': (${shape.join(', ')}${shape.length === 1 ? ',' : ''}), }`
  const unpadded = 10 + header.length + 1
  header = header + ' '.repeat((64 - (unpadded % 64)) % 64) + '\n'
  const head = Buffer.alloc(10 + header.length)
  head.write('\x93NUMPY', 0, 'latin1')
  head.writeUInt8(1, 6)
  head.writeUInt8(0, 7)
  head.writeUInt16LE(header.length, 8)
  head.write(header, 10, 'latin1')
  const itemsize = dtype === '|u1' ? 1 : dtype === '<f4' ? 4 : 8
  const payload = Buffer.alloc(count * itemsize)
  values.forEach((v, i) => {
    if (dtype === '<f4') payload.writeFloatLE(Math.fround(v), 4 * i)
    else if (dtype === '<f8') payload.writeDoubleLE(v, 8 * i)
    else payload.writeUInt8(v, i)
  })
  return new Uint8Array(Buffer.concat([head, payload]))
}

export function writeNpz(file: string, entries: Record<string, Uint8Array>, stored = false): void {
  const named: Record<string, Uint8Array> = {}
  for (const [key, bytes] of Object.entries(entries)) named[key + '.npy'] = bytes
  fs.writeFileSync(file, zipSync(named, { level: stored ? 0 : 6 }))
}

export function readPfm(file: string): { width: number; height: number; values: Float32Array } {
  const raw = fs.readFileSync(file)
  const headerEnd = raw.indexOf(10, raw.indexOf(10, raw.indexOf(10) + 1) + 1) + 1
  const header = raw.subarray(0, headerEnd).toString('ascii').split(/\s+/)
  if (header[0] !== 'Pf') throw new Error('not a grayscale PFM')
  const width = parseInt(header[1], 10)
  const height = parseInt(header[2], 10)
  const scale = parseFloat(header[3])
  const flat = new Float32Array(width * height)
  for (let i = 0; i < flat.length; i++) {
    flat[i] = scale < 0 ? raw.readFloatLE(headerEnd + 4 * i) : raw.readFloatBE(headerEnd + 4 * i)
  }
  const values = new Float32Array(width * height)
  for (let row = 0; row < height; row++) {
    values.set(flat.subarray((height - 1 - row) * width, (height - row) * width), row * width)
  }
  return { width, height, values }
}

export function readPgm(file: string): { width: number; height: number; bytes: Uint8Array } {
  const raw = fs.readFileSync(file)
  const text = raw.toString('latin1')
  const match = /^P5\s+(\d+)\s+(\d+)\s+255\s/.exec(text)
  if (!match) throw new Error('not a binary PGM')
  const width = parseInt(match[1], 10)
  const height = parseInt(match[2], 10)
  return { width, height, bytes: new Uint8Array(raw.subarray(match[0].length)) }
}

export function readJsonLines(file: string): Array<Record<string, unknown>> {
  return fs
    .readFileSync(file, 'ascii')
    .split('\n')
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line))
}

export const IDENTITY_POSE = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]

export function poseWithTranslation(x: number, y: number, z: number): number[] {
  return [1, 0, 0, x, 0, 1, 0, y, 0, 0, 1, z, 0, 0, 0, 1]
}

export function intrinsics3x3(fx: number, fy: number, cx: number, cy: number): number[] {
  return [fx, 0, cx, 0, fy, cy, 0, 0, 1]
}
