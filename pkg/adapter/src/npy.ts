import { unzipSync } from 'fflate'
import { fromArrayBuffer } from 'numpy-parser'

export type NpyArray = {
  data: Float32Array | Float64Array | Uint8Array | Int32Array | Int64Array | Uint16Array | Int16Array
  shape: number[]
}

type Int64Array = BigInt64Array

function toArrayBuffer(u8: Uint8Array): ArrayBuffer {
  // numpy-parser expects a plain ArrayBuffer spanning exactly the payload
  return u8.slice().buffer
}

export function parseNpy(bytes: Uint8Array): NpyArray {
  const arr = fromArrayBuffer(toArrayBuffer(bytes)) as { data: NpyArray['data']; shape: number[] }
  return { data: arr.data, shape: arr.shape }
}

/** Unpack an .npz archive into name -> array, dropping the '.npy' suffix. */
export function parseNpz(bytes: Uint8Array): Record<string, NpyArray> {
  const entries = unzipSync(bytes)
  const out: Record<string, NpyArray> = {}
  for (const [name, payload] of Object.entries(entries)) {
    out[name.replace(/\.npy$/i, '')] = parseNpy(payload as Uint8Array)
  }
  return out
}

export function is2d(arr: NpyArray): boolean {
  return arr.shape.length === 2
}

export function hasShape(arr: NpyArray, shape: number[]): boolean {
  return arr.shape.length === shape.length && arr.shape.every((v, i) => v === shape[i])
}
