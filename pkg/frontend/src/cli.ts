/** Command line entry points: make-samples, export, export-samples. */
import * as fs from 'node:fs'
import * as path from 'node:path'
import { runExport } from './exporter.js'
import { makeSamples, readMeta } from './samples.js'

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>()
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`bad arguments near ${key}`)
    }
    flags.set(key.slice(2), argv[i + 1])
  }
  return flags
}

function need(flags: Map<string, string>, key: string): string {
  const value = flags.get(key)
  if (value === undefined) throw new Error(`missing --${key}`)
  return value
}

function main(argv: string[]): number {
  const [command, ...rest] = argv
  try {
    if (command === 'make-samples') {
      const flags = parseFlags(rest)
      const dirs = makeSamples(need(flags, 'out'))
      for (const dir of dirs) console.log(dir)
      return 0
    }
    if (command === 'export') {
      const flags = parseFlags(rest)
      const gt = flags.get('ground-truth-index')
      const result = runExport({
        videoId: need(flags, 'video-id'),
        framesDir: need(flags, 'frames'),
        title: flags.get('title') ?? '',
        description: flags.get('description') ?? '',
        audioPath: need(flags, 'audio'),
        outDir: need(flags, 'out'),
        groundTruthIndex: gt === undefined ? undefined : parseInt(gt, 10),
      }, msg => console.error(msg))
      console.log(`${result.manifestPath} frames=${result.frameCount} ` +
                  `audio_windows=${result.windowCount} warnings=${result.warnings.length}`)
      return 0
    }
    if (command === 'export-samples') {
      const flags = parseFlags(rest)
      const samplesDir = need(flags, 'samples')
      const outDir = need(flags, 'out')
      for (const name of fs.readdirSync(samplesDir).sort()) {
        const dir = path.join(samplesDir, name)
        if (!fs.statSync(dir).isDirectory()) continue
        const meta = readMeta(dir)
        const result = runExport({
          videoId: meta.video_id,
          framesDir: path.join(dir, 'frames'),
          title: meta.title,
          description: meta.description,
          audioPath: path.join(dir, 'audio.wav'),
          outDir: path.join(outDir, meta.video_id),
        }, msg => console.error(msg))
        console.log(result.manifestPath)
      }
      return 0
    }
    console.error('usage: cli.js <make-samples|export|export-samples> [--flags]')
    return 2
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    return 2
  }
}

process.exit(main(process.argv.slice(2)))
