/**
 * Export one video's multimodal features as a thumbnail-selection bundle:
 * frames.tft (T_f x 512), audio.tft (T_a x 2048), title.tft and
 * description.tft (768 each), a manifest.json pointing at them, and a
 * backbones.lock.json pinning the embedding backbones by version, seed, and
 * weight hash.
 */
import * as fs from 'node:fs'
import * as path from 'node:path'
import { AudioBackbone, FrameBackbone, TextBackbone } from './backbones.js'
import { readPpm } from './image.js'
import { contextWindows, logMelFrames, SAMPLE_RATE, WINDOW_FRAMES, FRAME_HOP, MEL_BANDS } from './melspec.js'
import { writeTensor } from './tensorfile.js'
import { readWav } from './wav.js'

export interface ExportJob {
  videoId: string
  framesDir: string
  title: string
  description: string
  audioPath: string
  outDir: string
  groundTruthIndex?: number
}

export interface ExportResult {
  manifestPath: string
  frameCount: number
  windowCount: number
  warnings: string[]
}

function frameIdOf(name: string, position: number): number {
  const m = /([0-9]+)\.[A-Za-z]+$/.exec(name)
  return m ? parseInt(m[1], 10) : position
}

export function listFrames(framesDir: string): { name: string, id: number }[] {
  const names = fs.readdirSync(framesDir).filter(n => n.toLowerCase().endsWith('.ppm')).sort()
  const entries = names.map((name, i) => ({ name, id: frameIdOf(name, i) }))
  entries.sort((a, b) => a.id - b.id)
  return entries
}

function stack(rows: Float32Array[], width: number): Float32Array {
  const out = new Float32Array(rows.length * width)
  rows.forEach((row, i) => out.set(row, i * width))
  return out
}

export function runExport(job: ExportJob,
                          log: (msg: string) => void = () => {}): ExportResult {
  const warnings: string[] = []
  fs.mkdirSync(job.outDir, { recursive: true })

  const frameNet = new FrameBackbone()
  const textNet = new TextBackbone()
  const audioNet = new AudioBackbone()

  // frames, in temporal (frame-id) order
  const entries = listFrames(job.framesDir)
  const frameRows: Float32Array[] = []
  for (const { name } of entries) {
    try {
      frameRows.push(frameNet.embed(readPpm(path.join(job.framesDir, name))))
    } catch (err) {
      warnings.push(name)
      log(`warning: skipped frame ${name}: ${(err as Error).message}`)
    }
  }
  if (frameRows.length === 0) throw new Error(`${job.framesDir}: no readable frames`)

  // text
  if (job.title.length === 0) {
    warnings.push('title')
    log('warning: empty title, embedding zero vector')
  }
  if (job.description.length === 0) {
    warnings.push('description')
    log('warning: empty description, embedding zero vector')
  }
  const title = textNet.embed(job.title)
  const description = textNet.embed(job.description)

  // audio
  const audio = readWav(job.audioPath)
  if (audio.sampleRate !== SAMPLE_RATE) {
    throw new Error(`${job.audioPath}: expected ${SAMPLE_RATE} Hz, got ${audio.sampleRate}`)
  }
  const windows = contextWindows(logMelFrames(audio.samples))
  if (windows.length === 0) {
    throw new Error(`${job.audioPath}: too short for one ${WINDOW_FRAMES}-frame context window`)
  }
  const audioRows = windows.map(w => audioNet.embed(w))

  // tensor files
  writeTensor(path.join(job.outDir, 'frames.tft'),
              [frameRows.length, 512], stack(frameRows, 512))
  writeTensor(path.join(job.outDir, 'audio.tft'),
              [audioRows.length, 2048], stack(audioRows, 2048))
  writeTensor(path.join(job.outDir, 'title.tft'), [768], title)
  writeTensor(path.join(job.outDir, 'description.tft'), [768], description)

  // manifest (paths relative to the manifest itself)
  const manifest: Record<string, unknown> = {
    video_id: job.videoId,
    category: 'Unknown',
    features: {
      frames: 'frames.tft',
      audio: 'audio.tft',
      title: 'title.tft',
      description: 'description.tft',
    },
    frames_dir: path.relative(job.outDir, job.framesDir) || '.',
    duration_seconds: audio.samples.length / SAMPLE_RATE,
  }
  if (job.groundTruthIndex !== undefined) {
    if (job.groundTruthIndex < 0 || job.groundTruthIndex >= frameRows.length) {
      throw new Error(`ground truth index ${job.groundTruthIndex} outside [0, ${frameRows.length})`)
    }
    manifest.ground_truth = { frame_index: job.groundTruthIndex }
  }
  const manifestPath = path.join(job.outDir, 'manifest.json')
  fs.writeFileSync(manifestPath, stableJson(manifest) + '\n')

  const lock = {
    backbones: [frameNet.info(), textNet.info(), audioNet.info()],
    audio_front_end: {
      sample_rate: SAMPLE_RATE,
      frame_hop_samples: FRAME_HOP,
      mel_bands: MEL_BANDS,
      window_frames: WINDOW_FRAMES,
      window_hop_frames: WINDOW_FRAMES, // non-overlapping windows
    },
  }
  fs.writeFileSync(path.join(job.outDir, 'backbones.lock.json'),
                   stableJson(lock) + '\n')
  return {
    manifestPath,
    frameCount: frameRows.length,
    windowCount: audioRows.length,
    warnings,
  }
}

function stableJson(value: unknown): string {
  return JSON.stringify(sortKeys(value), null, 2)
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeys)
  if (value && typeof value === 'object') {
    const out: Record<string, unknown> = {}
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      out[key] = sortKeys((value as Record<string, unknown>)[key])
    }
    return out
  }
  return value
}
