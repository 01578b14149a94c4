/**
 * Pinned deterministic embedding backbones.
 *
 * Each backbone is a seeded projection whose weights are derived from a
 * fixed version string and seed, content-hashed into the export lockfile, so
 * identical inputs under identical backbone versions re-export byte-for-byte
 * identical tensors.
 *
 * Output widths match the fusion model's contract: 512 per frame, 2048 per
 * audio context window, 768 per text field.
 */
import { createHash } from 'node:crypto'
import { Image, resize } from './image.js'
import { MEL_BANDS, WINDOW_FRAMES } from './melspec.js'
import { seededWeights } from './rng.js'

export const FRAME_DIM = 512
export const AUDIO_DIM = 2048
export const TEXT_DIM = 768

const FRAME_INPUT = 32 * 32 * 3
const TEXT_BUCKETS = 4096
const AUDIO_INPUT = WINDOW_FRAMES * MEL_BANDS

export interface BackboneInfo {
  name: string
  version: string
  seed: number
  weights_sha256: string
}

function hashWeights(w: Float32Array): string {
  return createHash('sha256').update(Buffer.from(w.buffer, w.byteOffset, w.byteLength)).digest('hex')
}

function project(input: Float64Array, weights: Float32Array, outDim: number,
                 activation: 'tanh' | 'linear'): Float32Array {
  const inDim = input.length
  if (weights.length !== inDim * outDim) {
    throw new Error(`weight matrix is ${weights.length}, expected ${inDim}x${outDim}`)
  }
  const out = new Float32Array(outDim)
  for (let i = 0; i < inDim; i++) {
    const v = input[i]
    if (v === 0) continue
    const row = i * outDim
    for (let j = 0; j < outDim; j++) out[j] += Math.fround(v * weights[row + j])
  }
  if (activation === 'tanh') {
    for (let j = 0; j < outDim; j++) out[j] = Math.fround(Math.tanh(out[j]))
  }
  return out
}

export class FrameBackbone {
  static readonly VERSION = 'patch-projection/1.0.0'
  static readonly SEED = 11101
  private weights = seededWeights(FRAME_INPUT, FRAME_DIM, FrameBackbone.SEED)

  /** 512-dim embedding of one frame: resize to 32x32, project, tanh. */
  embed(image: Image): Float32Array {
    const small = resize(image, 32, 32)
    return project(small.pixels, this.weights, FRAME_DIM, 'tanh')
  }

  info(): BackboneInfo {
    return { name: 'frame', version: FrameBackbone.VERSION,
             seed: FrameBackbone.SEED, weights_sha256: hashWeights(this.weights) }
  }
}

export class TextBackbone {
  static readonly VERSION = 'trigram-projection/1.0.0'
  static readonly SEED = 22202
  private weights = seededWeights(TEXT_BUCKETS, TEXT_DIM, TextBackbone.SEED)

  /** 768-dim embedding of a UTF-8 string via hashed byte trigrams. An empty
   * string embeds to the zero vector (callers warn). */
  embed(text: string): Float32Array {
    if (text.length === 0) return new Float32Array(TEXT_DIM)
    const bytes = Buffer.from(text, 'utf8')
    const bag = new Float64Array(TEXT_BUCKETS)
    // sentinel-padded so one- and two-byte strings still produce trigrams
    const padded = Buffer.concat([Buffer.from([1]), bytes, Buffer.from([2])])
    for (let i = 0; i + 2 < padded.length; i++) {
      let h = 2166136261
      h = Math.imul(h ^ padded[i], 16777619)
      h = Math.imul(h ^ padded[i + 1], 16777619)
      h = Math.imul(h ^ padded[i + 2], 16777619)
      bag[(h >>> 0) % TEXT_BUCKETS] += 1
    }
    const norm = Math.sqrt(Math.max(1, padded.length - 2))
    for (let i = 0; i < TEXT_BUCKETS; i++) bag[i] /= norm
    return project(bag, this.weights, TEXT_DIM, 'tanh')
  }

  info(): BackboneInfo {
    return { name: 'text', version: TextBackbone.VERSION,
             seed: TextBackbone.SEED, weights_sha256: hashWeights(this.weights) }
  }
}

export class AudioBackbone {
  static readonly VERSION = 'logmel-projection/1.0.0'
  static readonly SEED = 33303
  private weights = seededWeights(AUDIO_INPUT, AUDIO_DIM, AudioBackbone.SEED)

  /** 2048-dim pre-activation embedding of one flattened 96x64 log-mel
   * context window. */
  embed(window: Float64Array): Float32Array {
    return project(window, this.weights, AUDIO_DIM, 'linear')
  }

  info(): BackboneInfo {
    return { name: 'audio', version: AudioBackbone.VERSION,
             seed: AudioBackbone.SEED, weights_sha256: hashWeights(this.weights) }
  }
}
