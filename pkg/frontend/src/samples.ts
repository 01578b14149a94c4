/** Deterministic sample videos for exporter conformance tests: a few PPM
 * frames, a 16 kHz mono WAV, and title/description metadata per video. */
import * as fs from 'node:fs'
import * as path from 'node:path'
import { Image, writePpm } from './image.js'
import { SAMPLE_RATE } from './melspec.js'
import { Rng } from './rng.js'
import { writeWav } from './wav.js'

export interface SampleMeta {
  video_id: string
  title: string
  description: string
}

const SAMPLES: { meta: SampleMeta, nFrames: number, seconds: number, seed: number }[] = [
  {
    meta: { video_id: 'sample_ramp',
            title: 'Sunrise time lapse over the bay',
            description: 'Slow color ramp from night blues to morning gold.' },
    nFrames: 6, seconds: 1.0, seed: 101,
  },
  {
    meta: { video_id: 'sample_checker',
            title: 'Street chess speed run',
            description: 'Checkerboard patterns with a moving highlight square.' },
    nFrames: 8, seconds: 2.05, seed: 202,
  },
  {
    meta: { video_id: 'sample_noise',
            title: 'Festival crowd drone shot',
            description: 'Textured scenes with a bright moving subject.' },
    nFrames: 10, seconds: 3.1, seed: 303,
  },
]

function makeFrame(width: number, height: number, seed: number, t: number): Image {
  const rng = new Rng(seed * 1000 + t)
  const pixels = new Float64Array(width * height * 3)
  const cx = (t + 1) / 12
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const base = (x / width) * 0.5 + (y / height) * 0.3
      const blob = Math.exp(-(((x / width - cx) ** 2 + (y / height - 0.5) ** 2) * 20))
      const i = (y * width + x) * 3
      pixels[i] = Math.min(1, base + blob + rng.nextFloat() * 0.05)
      pixels[i + 1] = Math.min(1, base * 0.8 + blob * 0.6 + rng.nextFloat() * 0.05)
      pixels[i + 2] = Math.min(1, 0.9 - base * 0.5 + rng.nextFloat() * 0.05)
    }
  }
  return { width, height, pixels }
}

function makeAudio(seconds: number, seed: number): Float64Array {
  const n = Math.round(seconds * SAMPLE_RATE)
  const rng = new Rng(seed)
  const out = new Float64Array(n)
  const f0 = 180 + (seed % 7) * 40
  for (let i = 0; i < n; i++) {
    const t = i / SAMPLE_RATE
    out[i] = 0.4 * Math.sin(2 * Math.PI * (f0 + 60 * t) * t)
      + 0.2 * Math.sin(2 * Math.PI * 2.5 * f0 * t)
      + 0.05 * (rng.nextFloat() * 2 - 1)
  }
  return out
}

export function makeSamples(outDir: string): string[] {
  const dirs: string[] = []
  for (const sample of SAMPLES) {
    const dir = path.join(outDir, sample.meta.video_id)
    const framesDir = path.join(dir, 'frames')
    fs.mkdirSync(framesDir, { recursive: true })
    for (let t = 0; t < sample.nFrames; t++) {
      writePpm(path.join(framesDir, `frame_${String(t).padStart(5, '0')}.ppm`),
               makeFrame(64, 48, sample.seed, t))
    }
    writeWav(path.join(dir, 'audio.wav'),
             { sampleRate: SAMPLE_RATE, samples: makeAudio(sample.seconds, sample.seed) })
    fs.writeFileSync(path.join(dir, 'meta.json'),
                     JSON.stringify(sample.meta, null, 2) + '\n')
    dirs.push(dir)
  }
  return dirs
}

export function readMeta(dir: string): SampleMeta {
  return JSON.parse(fs.readFileSync(path.join(dir, 'meta.json'), 'utf8'))
}
