declare module 'numpy-parser' {
  export type TypedArray =
    | Float32Array
    | Float64Array
    | Uint8Array
    | Uint16Array
    | Int8Array
    | Int16Array
    | Int32Array
    | BigInt64Array
    | BigUint64Array

  export function fromArrayBuffer(buffer: ArrayBuffer): {
    data: TypedArray
    shape: number[]
  }
}
