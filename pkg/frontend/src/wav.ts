/** Minimal PCM16 mono WAV reading and writing. */
import * as fs from 'node:fs'

export interface Audio {
  sampleRate: number
  /** samples normalized to [-1, 1] */
  samples: Float64Array
}

export function readWav(path: string): Audio {
  const buf = fs.readFileSync(path)
  if (buf.length < 44 || buf.toString('ascii', 0, 4) !== 'RIFF' ||
      buf.toString('ascii', 8, 12) !== 'WAVE') {
    throw new Error(`${path}: not a RIFF/WAVE file`)
  }
  let pos = 12
  let sampleRate = 0
  let channels = 0
  let bits = 0
  let data: Buffer | null = null
  while (pos + 8 <= buf.length) {
    const id = buf.toString('ascii', pos, pos + 4)
    const size = buf.readUInt32LE(pos + 4)
    const body = buf.subarray(pos + 8, pos + 8 + size)
    if (id === 'fmt ') {
      const format = body.readUInt16LE(0)
      channels = body.readUInt16LE(2)
      sampleRate = body.readUInt32LE(4)
      bits = body.readUInt16LE(14)
      if (format !== 1) throw new Error(`${path}: only PCM supported`)
    } else if (id === 'data') {
      data = Buffer.from(body)
    }
    pos += 8 + size + (size % 2)
  }
  if (!data || !sampleRate) throw new Error(`${path}: missing fmt/data chunks`)
  if (channels !== 1 || bits !== 16) {
    throw new Error(`${path}: expected 16-bit mono, got ${bits}-bit ${channels}ch`)
  }
  const n = Math.floor(data.length / 2)
  const samples = new Float64Array(n)
  for (let i = 0; i < n; i++) samples[i] = data.readInt16LE(i * 2) / 32768
  return { sampleRate, samples }
}

export function writeWav(path: string, audio: Audio): void {
  const n = audio.samples.length
  const buf = Buffer.alloc(44 + n * 2)
  buf.write('RIFF', 0, 'ascii')
  buf.writeUInt32LE(36 + n * 2, 4)
  buf.write('WAVE', 8, 'ascii')
  buf.write('fmt ', 12, 'ascii')
  buf.writeUInt32LE(16, 16)
  buf.writeUInt16LE(1, 20) // PCM
  buf.writeUInt16LE(1, 22) // mono
  buf.writeUInt32LE(audio.sampleRate, 24)
  buf.writeUInt32LE(audio.sampleRate * 2, 28)
  buf.writeUInt16LE(2, 32)
  buf.writeUInt16LE(16, 34)
  buf.write('data', 36, 'ascii')
  buf.writeUInt32LE(n * 2, 40)
  for (let i = 0; i < n; i++) {
    const v = Math.max(-1, Math.min(1, audio.samples[i]))
    buf.writeInt16LE(Math.round(v * 32767), 44 + i * 2)
  }
  fs.writeFileSync(path, buf)
}
