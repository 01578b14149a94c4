/**
 * Log mel spectrogram front end for the audio backbone.
 *
 * 16 kHz input, 25 ms Hann frames at a 10 ms hop, 512-point FFT, 64
 * triangular mel bands between 125 Hz and 7500 Hz. Frames are grouped into
 * context windows of 96 frames with a non-overlapping hop of one window
 * length; the hop choice is recorded in the export lockfile.
 */

export const SAMPLE_RATE = 16000
export const FRAME_LEN = 400
export const FRAME_HOP = 160
export const FFT_SIZE = 512
export const MEL_BANDS = 64
export const MEL_FMIN = 125
export const MEL_FMAX = 7500
export const WINDOW_FRAMES = 96
export const MAX_WINDOWS = 300

/** In-place iterative radix-2 complex FFT. */
export function fft(re: Float64Array, im: Float64Array): void {
  const n = re.length
  if ((n & (n - 1)) !== 0) throw new Error(`FFT size ${n} is not a power of two`)
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1
    for (; j & bit; bit >>= 1) j ^= bit
    j ^= bit
    if (i < j) {
      ;[re[i], re[j]] = [re[j], re[i]]
      ;[im[i], im[j]] = [im[j], im[i]]
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const ang = (-2 * Math.PI) / len
    const wRe = Math.cos(ang)
    const wIm = Math.sin(ang)
    for (let i = 0; i < n; i += len) {
      let curRe = 1
      let curIm = 0
      for (let k = 0; k < len / 2; k++) {
        const uRe = re[i + k]
        const uIm = im[i + k]
        const vRe = re[i + k + len / 2] * curRe - im[i + k + len / 2] * curIm
        const vIm = re[i + k + len / 2] * curIm + im[i + k + len / 2] * curRe
        re[i + k] = uRe + vRe
        im[i + k] = uIm + vIm
        re[i + k + len / 2] = uRe - vRe
        im[i + k + len / 2] = uIm - vIm
        const nextRe = curRe * wRe - curIm * wIm
        curIm = curRe * wIm + curIm * wRe
        curRe = nextRe
      }
    }
  }
}

function hannWindow(n: number): Float64Array {
  const w = new Float64Array(n)
  for (let i = 0; i < n; i++) w[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / (n - 1))
  return w
}

function hzToMel(hz: number): number {
  return 2595 * Math.log10(1 + hz / 700)
}

function melToHz(mel: number): number {
  return 700 * (Math.pow(10, mel / 2595) - 1)
}

/** Triangular filterbank over FFT bins, MEL_BANDS x (FFT_SIZE/2 + 1). */
export function melFilterbank(): Float64Array[] {
  const bins = FFT_SIZE / 2 + 1
  const melLo = hzToMel(MEL_FMIN)
  const melHi = hzToMel(MEL_FMAX)
  const centers: number[] = []
  for (let m = 0; m < MEL_BANDS + 2; m++) {
    const mel = melLo + ((melHi - melLo) * m) / (MEL_BANDS + 1)
    centers.push((melToHz(mel) / (SAMPLE_RATE / 2)) * (bins - 1))
  }
  const filters: Float64Array[] = []
  for (let m = 0; m < MEL_BANDS; m++) {
    const f = new Float64Array(bins)
    const [lo, mid, hi] = [centers[m], centers[m + 1], centers[m + 2]]
    for (let b = 0; b < bins; b++) {
      if (b > lo && b < mid) f[b] = (b - lo) / (mid - lo)
      else if (b >= mid && b < hi) f[b] = (hi - b) / (hi - mid)
    }
    filters.push(f)
  }
  return filters
}

export function frameCount(nSamples: number): number {
  return nSamples < FRAME_LEN ? 0 : 1 + Math.floor((nSamples - FRAME_LEN) / FRAME_HOP)
}

export function windowCount(nSamples: number): number {
  return Math.min(MAX_WINDOWS, Math.floor(frameCount(nSamples) / WINDOW_FRAMES))
}

/** Log-mel frames, one Float64Array(MEL_BANDS) per 10 ms hop. */
export function logMelFrames(samples: Float64Array): Float64Array[] {
  const filters = melFilterbank()
  const window = hannWindow(FRAME_LEN)
  const n = frameCount(samples.length)
  const frames: Float64Array[] = []
  const re = new Float64Array(FFT_SIZE)
  const im = new Float64Array(FFT_SIZE)
  for (let t = 0; t < n; t++) {
    re.fill(0)
    im.fill(0)
    const start = t * FRAME_HOP
    for (let i = 0; i < FRAME_LEN; i++) re[i] = samples[start + i] * window[i]
    fft(re, im)
    const bins = FFT_SIZE / 2 + 1
    const power = new Float64Array(bins)
    for (let b = 0; b < bins; b++) power[b] = re[b] * re[b] + im[b] * im[b]
    const mel = new Float64Array(MEL_BANDS)
    for (let m = 0; m < MEL_BANDS; m++) {
      let acc = 0
      const f = filters[m]
      for (let b = 0; b < bins; b++) acc += f[b] * power[b]
      mel[m] = Math.log(acc + 1e-6)
    }
    frames.push(mel)
  }
  return frames
}

/** Non-overlapping context windows, each flattened frame-major to
 * WINDOW_FRAMES * MEL_BANDS values, capped at MAX_WINDOWS. */
export function contextWindows(frames: Float64Array[]): Float64Array[] {
  const count = Math.min(MAX_WINDOWS, Math.floor(frames.length / WINDOW_FRAMES))
  const out: Float64Array[] = []
  for (let w = 0; w < count; w++) {
    const flat = new Float64Array(WINDOW_FRAMES * MEL_BANDS)
    for (let t = 0; t < WINDOW_FRAMES; t++) {
      flat.set(frames[w * WINDOW_FRAMES + t], t * MEL_BANDS)
    }
    out.push(flat)
  }
  return out
}
