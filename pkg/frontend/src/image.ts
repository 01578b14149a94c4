/** Binary PPM (P6) reading/writing and bilinear resizing. Pixels are floats
 * in [0, 1], row-major (H, W, 3). */
import * as fs from 'node:fs'

export interface Image {
  width: number
  height: number
  /** length = height * width * 3 */
  pixels: Float64Array
}

export function readPpm(path: string): Image {
  const buf = fs.readFileSync(path)
  let pos = 0
  const token = (): string => {
    while (pos < buf.length) {
      const c = buf[pos]
      if (c === 0x23) { // '#' comment
        while (pos < buf.length && buf[pos] !== 0x0a) pos++
      } else if (c === 0x20 || c === 0x09 || c === 0x0a || c === 0x0d) {
        pos++
      } else break
    }
    const start = pos
    while (pos < buf.length) {
      const c = buf[pos]
      if (c === 0x20 || c === 0x09 || c === 0x0a || c === 0x0d) break
      pos++
    }
    if (start === pos) throw new Error(`${path}: truncated PPM header`)
    return buf.toString('ascii', start, pos)
  }
  if (token() !== 'P6') throw new Error(`${path}: not a binary PPM`)
  const width = parseInt(token(), 10)
  const height = parseInt(token(), 10)
  const maxval = parseInt(token(), 10)
  if (!(width > 0 && height > 0)) throw new Error(`${path}: bad PPM size`)
  if (maxval !== 255) throw new Error(`${path}: unsupported maxval ${maxval}`)
  pos += 1 // single whitespace after maxval
  const need = width * height * 3
  if (buf.length - pos < need) throw new Error(`${path}: truncated PPM payload`)
  const pixels = new Float64Array(need)
  for (let i = 0; i < need; i++) pixels[i] = buf[pos + i] / 255
  return { width, height, pixels }
}

export function writePpm(path: string, image: Image): void {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, 'ascii')
  const body = Buffer.alloc(image.pixels.length)
  for (let i = 0; i < image.pixels.length; i++) {
    body[i] = Math.min(255, Math.max(0, Math.round(image.pixels[i] * 255)))
  }
  fs.writeFileSync(path, Buffer.concat([header, body]))
}

/** Bilinear resize with half-pixel centers and edge clamping. */
export function resize(image: Image, outH: number, outW: number): Image {
  const { width: w, height: h, pixels } = image
  if (h === outH && w === outW) {
    return { width: w, height: h, pixels: pixels.slice() }
  }
  const out = new Float64Array(outH * outW * 3)
  for (let y = 0; y < outH; y++) {
    const sy = (y + 0.5) * (h / outH) - 0.5
    const y0 = Math.min(h - 1, Math.max(0, Math.floor(sy)))
    const y1 = Math.min(h - 1, y0 + 1)
    const wy = Math.min(1, Math.max(0, sy - y0))
    for (let x = 0; x < outW; x++) {
      const sx = (x + 0.5) * (w / outW) - 0.5
      const x0 = Math.min(w - 1, Math.max(0, Math.floor(sx)))
      const x1 = Math.min(w - 1, x0 + 1)
      const wx = Math.min(1, Math.max(0, sx - x0))
      for (let c = 0; c < 3; c++) {
        const p00 = pixels[(y0 * w + x0) * 3 + c]
        const p01 = pixels[(y0 * w + x1) * 3 + c]
        const p10 = pixels[(y1 * w + x0) * 3 + c]
        const p11 = pixels[(y1 * w + x1) * 3 + c]
        const top = p00 * (1 - wx) + p01 * wx
        const bottom = p10 * (1 - wx) + p11 * wx
        out[(y * outW + x) * 3 + c] = top * (1 - wy) + bottom * wy
      }
    }
  }
  return { width: outW, height: outH, pixels: out }
}
