/**
 * TFTF binary tensor files, matching the thumbforge persistence format:
 * magic "TFTF", u32 version=1, u32 dtype (0=f32, 1=f64), u32 ndim,
 * ndim x u64 dims, then row-major little-endian payload.
 */
import * as fs from 'node:fs'

export interface TensorData {
  dims: number[]
  values: Float32Array | Float64Array
}

export function encodeTensor(dims: number[], values: Float32Array | Float64Array): Buffer {
  const count = dims.reduce((a, b) => a * b, 1)
  if (count !== values.length) {
    throw new Error(`dims ${dims} need ${count} values, got ${values.length}`)
  }
  const dtype = values instanceof Float32Array ? 0 : 1
  const itemSize = dtype === 0 ? 4 : 8
  const buf = Buffer.alloc(16 + 8 * dims.length + count * itemSize)
  buf.write('TFTF', 0, 'ascii')
  buf.writeUInt32LE(1, 4)
  buf.writeUInt32LE(dtype, 8)
  buf.writeUInt32LE(dims.length, 12)
  let off = 16
  for (const d of dims) {
    buf.writeBigUInt64LE(BigInt(d), off)
    off += 8
  }
  for (let i = 0; i < count; i++) {
    if (dtype === 0) buf.writeFloatLE(values[i], off)
    else buf.writeDoubleLE(values[i], off)
    off += itemSize
  }
  return buf
}

export function writeTensor(path: string, dims: number[], values: Float32Array | Float64Array): void {
  fs.writeFileSync(path, encodeTensor(dims, values))
}

export function readTensor(path: string): TensorData {
  const buf = fs.readFileSync(path)
  if (buf.length < 16) throw new Error(`${path}: truncated header`)
  if (buf.toString('ascii', 0, 4) !== 'TFTF') throw new Error(`${path}: bad magic`)
  const version = buf.readUInt32LE(4)
  if (version !== 1) throw new Error(`${path}: unsupported version ${version}`)
  const dtype = buf.readUInt32LE(8)
  if (dtype !== 0 && dtype !== 1) throw new Error(`${path}: unknown dtype ${dtype}`)
  const ndim = buf.readUInt32LE(12)
  const dims: number[] = []
  let off = 16
  for (let i = 0; i < ndim; i++) {
    dims.push(Number(buf.readBigUInt64LE(off)))
    off += 8
  }
  const count = dims.reduce((a, b) => a * b, 1)
  const itemSize = dtype === 0 ? 4 : 8
  if (buf.length - off !== count * itemSize) {
    throw new Error(`${path}: payload is ${buf.length - off} bytes, expected ${count * itemSize}`)
  }
  const values = dtype === 0 ? new Float32Array(count) : new Float64Array(count)
  for (let i = 0; i < count; i++) {
    values[i] = dtype === 0 ? buf.readFloatLE(off) : buf.readDoubleLE(off)
    off += itemSize
  }
  return { dims, values }
}
