import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { AudioBackbone, FrameBackbone, TextBackbone } from '../src/backbones.js'
import { readPpm, resize, writePpm } from '../src/image.js'
import {
  FRAME_HOP,
  FRAME_LEN,
  SAMPLE_RATE,
  WINDOW_FRAMES,
  fft,
  frameCount,
  logMelFrames,
  windowCount,
} from '../src/melspec.js'
import { runExport } from '../src/exporter.js'
import { makeSamples, readMeta } from '../src/samples.js'
import { encodeTensor, readTensor, writeTensor } from '../src/tensorfile.js'
import { readWav, writeWav } from '../src/wav.js'

let work: string

beforeAll(() => {
  work = fs.mkdtempSync(path.join(os.tmpdir(), 'feature-export-'))
})

afterAll(() => {
  fs.rmSync(work, { recursive: true, force: true })
})

describe('tensor files', () => {
  it('round-trips float32 payloads bit-exactly', () => {
    const values = new Float32Array([1.5, -2.25, 3.125, 0, 7.75, -0.5])
    const file = path.join(work, 't.tft')
    writeTensor(file, [2, 3], values)
    const back = readTensor(file)
    expect(back.dims).toEqual([2, 3])
    expect(Buffer.from((back.values as Float32Array).buffer))
      .toEqual(Buffer.from(values.buffer))
  })

  it('writes the declared header layout', () => {
    const buf = encodeTensor([768], new Float32Array(768))
    expect(buf.toString('ascii', 0, 4)).toBe('TFTF')
    expect(buf.readUInt32LE(4)).toBe(1)   // version
    expect(buf.readUInt32LE(8)).toBe(0)   // float32
    expect(buf.readUInt32LE(12)).toBe(1)  // ndim
    expect(Number(buf.readBigUInt64LE(16))).toBe(768)
    expect(buf.length).toBe(16 + 8 + 768 * 4)
  })
})

describe('codecs', () => {
  it('ppm round-trips', () => {
    const img = { width: 5, height: 4, pixels: new Float64Array(60).map((_, i) => (i % 7) / 7) }
    const file = path.join(work, 'img.ppm')
    writePpm(file, img)
    const back = readPpm(file)
    expect(back.width).toBe(5)
    expect(back.height).toBe(4)
    for (let i = 0; i < 60; i++) {
      expect(Math.abs(back.pixels[i] - img.pixels[i])).toBeLessThan(1 / 255)
    }
  })

  it('wav round-trips 16-bit mono', () => {
    const samples = new Float64Array(1000).map((_, i) => Math.sin(i / 20) * 0.7)
    const file = path.join(work, 'a.wav')
    writeWav(file, { sampleRate: SAMPLE_RATE, samples })
    const back = readWav(file)
    expect(back.sampleRate).toBe(SAMPLE_RATE)
    expect(back.samples.length).toBe(1000)
    for (let i = 0; i < 1000; i += 37) {
      expect(Math.abs(back.samples[i] - samples[i])).toBeLessThan(1e-4)
    }
  })

  it('resize keeps constants and shrinks anisotropically', () => {
    const img = { width: 4, height: 8, pixels: new Float64Array(96).fill(0.25) }
    const out = resize(img, 4, 4)
    expect(out.height).toBe(4)
    for (const v of out.pixels) expect(Math.abs(v - 0.25)).toBeLessThan(1e-12)
  })
})

describe('audio front end', () => {
  it('fft matches a direct DFT on a small case', () => {
    const n = 8
    const re = new Float64Array([1, 2, 0, -1, 3, 0.5, -2, 1])
    const im = new Float64Array(n)
    const reF = re.slice()
    const imF = im.slice()
    fft(reF, imF)
    for (let k = 0; k < n; k++) {
      let sr = 0
      let si = 0
      for (let t = 0; t < n; t++) {
        const ang = (-2 * Math.PI * k * t) / n
        sr += re[t] * Math.cos(ang)
        si += re[t] * Math.sin(ang)
      }
      expect(Math.abs(reF[k] - sr)).toBeLessThan(1e-9)
      expect(Math.abs(imF[k] - si)).toBeLessThan(1e-9)
    }
  })

  it('window count follows the declared hop arithmetic', () => {
    for (const seconds of [1.0, 2.05, 3.1, 0.5]) {
      const n = Math.round(seconds * SAMPLE_RATE)
      const frames = n < FRAME_LEN ? 0 : 1 + Math.floor((n - FRAME_LEN) / FRAME_HOP)
      expect(frameCount(n)).toBe(frames)
      expect(windowCount(n)).toBe(Math.floor(frames / WINDOW_FRAMES))
    }
  })

  it('silent audio produces constant log-mel frames', () => {
    const frames = logMelFrames(new Float64Array(SAMPLE_RATE))
    expect(frames.length).toBeGreaterThan(0)
    const first = frames[0]
    for (const frame of frames) {
      for (let m = 0; m < frame.length; m++) expect(frame[m]).toBe(first[m])
    }
  })
})

describe('backbones', () => {
  it('text embeddings are deterministic and 768-wide, empty maps to zero', () => {
    const net = new TextBackbone()
    const a = net.embed('thumbnail selection')
    const b = net.embed('thumbnail selection')
    expect(a.length).toBe(768)
    expect(Buffer.from(a.buffer)).toEqual(Buffer.from(b.buffer))
    const zero = net.embed('')
    expect(zero.every(v => v === 0)).toBe(true)
    const c = net.embed('a different sentence')
    expect(Buffer.from(a.buffer)).not.toEqual(Buffer.from(c.buffer))
  })

  it('backbone lock info carries stable weight hashes', () => {
    expect(new FrameBackbone().info().weights_sha256)
      .toBe(new FrameBackbone().info().weights_sha256)
    expect(new AudioBackbone().info().weights_sha256)
      .toBe(new AudioBackbone().info().weights_sha256)
    expect(new FrameBackbone().info().weights_sha256)
      .not.toBe(new TextBackbone().info().weights_sha256)
  })
})

describe('exporter conformance', () => {
  let samplesDir: string
  let outRoot: string

  beforeAll(() => {
    samplesDir = path.join(work, 'samples')
    outRoot = path.join(work, 'out')
    makeSamples(samplesDir)
  })

  function exportSample(name: string, outName: string) {
    const dir = path.join(samplesDir, name)
    const meta = readMeta(dir)
    return runExport({
      videoId: meta.video_id,
      framesDir: path.join(dir, 'frames'),
      title: meta.title,
      description: meta.description,
      audioPath: path.join(dir, 'audio.wav'),
      outDir: path.join(outRoot, outName),
    })
  }

  it('emits the contracted widths for all three sample videos', () => {
    // sorted by directory name: checker (8 frames), noise (10), ramp (6)
    const expectedFrames = [8, 10, 6]
    const expectedWindows = [2, 3, 1]
    const names = fs.readdirSync(samplesDir).sort()
    expect(names.length).toBe(3)
    names.forEach((name, i) => {
      const result = exportSample(name, name)
      expect(result.frameCount).toBe(expectedFrames[i])
      expect(result.windowCount).toBe(expectedWindows[i])
      const dir = path.join(outRoot, name)
      expect(readTensor(path.join(dir, 'frames.tft')).dims)
        .toEqual([expectedFrames[i], 512])
      expect(readTensor(path.join(dir, 'audio.tft')).dims)
        .toEqual([expectedWindows[i], 2048])
      expect(readTensor(path.join(dir, 'title.tft')).dims).toEqual([768])
      expect(readTensor(path.join(dir, 'description.tft')).dims).toEqual([768])
      const manifest = JSON.parse(
        fs.readFileSync(path.join(dir, 'manifest.json'), 'utf8'))
      expect(manifest.features.frames).toBe('frames.tft')
      expect(manifest.video_id).toBeTruthy()
    })
  })

  it('re-export is byte-identical under the pinned backbones', () => {
    const name = fs.readdirSync(samplesDir).sort()[0]
    exportSample(name, 'rerun_a')
    exportSample(name, 'rerun_b')
    for (const file of ['frames.tft', 'audio.tft', 'title.tft',
                        'description.tft', 'backbones.lock.json']) {
      const a = fs.readFileSync(path.join(outRoot, 'rerun_a', file))
      const b = fs.readFileSync(path.join(outRoot, 'rerun_b', file))
      expect(a.equals(b), file).toBe(true)
    }
  })

  it('duplicate frame files embed to identical rows', () => {
    const dupDir = path.join(work, 'dup', 'frames')
    fs.mkdirSync(dupDir, { recursive: true })
    const src = path.join(samplesDir, fs.readdirSync(samplesDir).sort()[0],
                          'frames', 'frame_00000.ppm')
    fs.copyFileSync(src, path.join(dupDir, 'frame_00000.ppm'))
    fs.copyFileSync(src, path.join(dupDir, 'frame_00001.ppm'))
    const audioSrc = path.join(samplesDir, fs.readdirSync(samplesDir).sort()[0],
                               'audio.wav')
    const result = runExport({
      videoId: 'dup', framesDir: dupDir, title: 't', description: 'd',
      audioPath: audioSrc, outDir: path.join(work, 'dup', 'out'),
    })
    expect(result.frameCount).toBe(2)
    const tensor = readTensor(path.join(work, 'dup', 'out', 'frames.tft'))
    const values = tensor.values as Float32Array
    expect(Buffer.from(values.slice(0, 512).buffer))
      .toEqual(Buffer.from(values.slice(512, 1024).buffer))
  })

  it('rejects a ground-truth index outside the frame range', () => {
    const name = fs.readdirSync(samplesDir).sort()[0]
    const dir = path.join(samplesDir, name)
    const meta = readMeta(dir)
    expect(() => runExport({
      videoId: meta.video_id, framesDir: path.join(dir, 'frames'),
      title: meta.title, description: meta.description,
      audioPath: path.join(dir, 'audio.wav'),
      outDir: path.join(work, 'gt_bad'), groundTruthIndex: 99,
    })).toThrow(/ground truth/)
  })
})
