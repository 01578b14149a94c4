/**
 * Deterministic PRNG (xorshift128) used to materialize pinned backbone
 * weights. The sequence depends only on the seed, so weight tensors are
 * byte-stable across runs and machines.
 */
export class Rng {
  private s0: number
  private s1: number
  private s2: number
  private s3: number

  constructor(seed: number) {
    // splitmix-style seeding to spread a small seed over the state
    let x = seed >>> 0
    const next = () => {
      x = (x + 0x9e3779b9) >>> 0
      let z = x
      z = Math.imul(z ^ (z >>> 16), 0x21f0aaad) >>> 0
      z = Math.imul(z ^ (z >>> 15), 0x735a2d97) >>> 0
      return (z ^ (z >>> 15)) >>> 0
    }
    this.s0 = next()
    this.s1 = next()
    this.s2 = next()
    this.s3 = next()
    if ((this.s0 | this.s1 | this.s2 | this.s3) === 0) this.s0 = 1
  }

  /** Uniform 32-bit unsigned integer. */
  nextU32(): number {
    const t = (this.s1 << 9) >>> 0
    let s = this.s3
    this.s3 = this.s2
    this.s2 = this.s1
    this.s1 = this.s0
    s ^= (s << 11) >>> 0
    s ^= s >>> 8
    this.s0 = (s ^ this.s0 ^ (this.s0 >>> 19)) >>> 0
    this.s0 = (this.s0 + t) >>> 0 // mix in a rotated lane for better diffusion
    return this.s0
  }

  /** Uniform float in [0, 1). */
  nextFloat(): number {
    return this.nextU32() / 4294967296
  }

  /** Uniform float in [-limit, limit). */
  uniform(limit: number): number {
    return (this.nextFloat() * 2 - 1) * limit
  }
}

/** Glorot-style uniform weight matrix, row-major (rows x cols). */
export function seededWeights(rows: number, cols: number, seed: number): Float32Array {
  const rng = new Rng(seed)
  const limit = Math.sqrt(6 / (rows + cols))
  const out = new Float32Array(rows * cols)
  for (let i = 0; i < out.length; i++) out[i] = Math.fround(rng.uniform(limit))
  return out
}
