/**
 * Image-space quality metrics: PSNR, MS-SSIM, and (when an ONNX model is
 * available) LPIPS.
 */

import type { Image } from './png.js'

export class MetricsError extends Error {}

function assertSameDims(a: Image, b: Image): void {
  if (a.width !== b.width || a.height !== b.height) {
    throw new MetricsError(`dimension mismatch ${a.width}x${a.height} vs ${b.width}x${b.height}`)
  }
}

export function psnr(ref: Image, test: Image): number {
  assertSameDims(ref, test)
  let sum = 0
  for (let i = 0; i < ref.data.length; i++) {
    const d = ref.data[i] - test.data[i]
    sum += d * d
  }
  const mse = sum / ref.data.length
  return mse === 0 ? Infinity : 10 * Math.log10(1 / mse)
}

// ---------------------------------------------------------------------------
// MS-SSIM on luma, the usual 5-scale weighting

const MSSSIM_WEIGHTS = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]
const K1 = 0.01
const K2 = 0.03

function toLuma(img: Image): { data: Float64Array; width: number; height: number } {
  const out = new Float64Array(img.width * img.height)
  for (let i = 0; i < out.length; i++) {
    out[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2]
  }
  return { data: out, width: img.width, height: img.height }
}

type Plane = { data: Float64Array; width: number; height: number }

function gaussianKernel(radius = 5, sigma = 1.5): Float64Array {
  const taps = new Float64Array(2 * radius + 1)
  let sum = 0
  for (let i = -radius; i <= radius; i++) {
    taps[i + radius] = Math.exp(-(i * i) / (2 * sigma * sigma))
    sum += taps[i + radius]
  }
  for (let i = 0; i < taps.length; i++) taps[i] /= sum
  return taps
}

const GAUSS = gaussianKernel()

function blurValid(p: Plane): Plane {
  const r = (GAUSS.length - 1) / 2
  const w2 = p.width - 2 * r
  const h2 = p.height - 2 * r
  if (w2 < 1 || h2 < 1) throw new MetricsError('image too small for the SSIM window')
  const rows = new Float64Array(p.height * w2)
  for (let y = 0; y < p.height; y++) {
    for (let x = 0; x < w2; x++) {
      let acc = 0
      for (let k = 0; k < GAUSS.length; k++) acc += GAUSS[k] * p.data[y * p.width + x + k]
      rows[y * w2 + x] = acc
    }
  }
  const out = new Float64Array(h2 * w2)
  for (let y = 0; y < h2; y++) {
    for (let x = 0; x < w2; x++) {
      let acc = 0
      for (let k = 0; k < GAUSS.length; k++) acc += GAUSS[k] * rows[(y + k) * w2 + x]
      out[y * w2 + x] = acc
    }
  }
  return { data: out, width: w2, height: h2 }
}

function ssimComponents(a: Plane, b: Plane): { luminance: number; contrastStructure: number } {
  const muA = blurValid(a)
  const muB = blurValid(b)
  const sq = (p: Plane): Plane => ({
    data: p.data.map((v) => v * v) as Float64Array, width: p.width, height: p.height })
  const mul = (p: Plane, q: Plane): Plane => ({
    data: p.data.map((v, i) => v * q.data[i]) as Float64Array, width: p.width, height: p.height })
  const muAA = blurValid(sq(a))
  const muBB = blurValid(sq(b))
  const muAB = blurValid(mul(a, b))
  const c1 = K1 * K1
  const c2 = K2 * K2
  let lum = 0
  let cs = 0
  const n = muA.data.length
  for (let i = 0; i < n; i++) {
    const ma = muA.data[i]
    const mb = muB.data[i]
    const va = muAA.data[i] - ma * ma
    const vb = muBB.data[i] - mb * mb
    const cov = muAB.data[i] - ma * mb
    lum += (2 * ma * mb + c1) / (ma * ma + mb * mb + c1)
    cs += (2 * cov + c2) / (va + vb + c2)
  }
  return { luminance: lum / n, contrastStructure: cs / n }
}

function downsample2(p: Plane): Plane {
  const w2 = Math.floor(p.width / 2)
  const h2 = Math.floor(p.height / 2)
  const out = new Float64Array(w2 * h2)
  for (let y = 0; y < h2; y++) {
    for (let x = 0; x < w2; x++) {
      out[y * w2 + x] = 0.25 * (
        p.data[2 * y * p.width + 2 * x] + p.data[2 * y * p.width + 2 * x + 1] +
        p.data[(2 * y + 1) * p.width + 2 * x] + p.data[(2 * y + 1) * p.width + 2 * x + 1])
    }
  }
  return { data: out, width: w2, height: h2 }
}

/** Scales that keep the 11-tap window inside the image. */
function usableScales(width: number, height: number): number {
  let scales = 0
  let size = Math.min(width, height)
  while (scales < MSSSIM_WEIGHTS.length && size >= GAUSS.length) {
    scales++
    size = Math.floor(size / 2)
  }
  if (scales === 0) throw new MetricsError('image too small for the SSIM window')
  return scales
}

export function msSsim(ref: Image, test: Image): number {
  assertSameDims(ref, test)
  let a = toLuma(ref)
  let b = toLuma(test)
  // small images use fewer scales with the weights renormalized
  const scales = usableScales(ref.width, ref.height)
  const norm = MSSSIM_WEIGHTS.slice(0, scales).reduce((s, w) => s + w, 0)
  let result = 1
  for (let scale = 0; scale < scales; scale++) {
    const weight = MSSSIM_WEIGHTS[scale] / norm
    const { luminance, contrastStructure } = ssimComponents(a, b)
    if (scale === scales - 1) {
      result *= Math.pow(Math.max(luminance * contrastStructure, 1e-12), weight)
    } else {
      result *= Math.pow(Math.max(contrastStructure, 1e-12), weight)
      a = downsample2(a)
      b = downsample2(b)
    }
  }
  return result
}

// ---------------------------------------------------------------------------
// LPIPS through an optional ONNX session

export interface LpipsConfig {
  /** path to an LPIPS .onnx taking two [1,3,H,W] inputs in [-1,1] */
  modelPath?: string
}

export async function lpips(ref: Image, test: Image, config: LpipsConfig): Promise<number> {
  assertSameDims(ref, test)
  if (!config.modelPath) {
    throw new MetricsError('LPIPS needs an ONNX model (set --lpips-model or CLRIC_LPIPS_ONNX)')
  }
  let ort: any
  try {
    ort = await import('onnxruntime-node')
  } catch {
    throw new MetricsError('onnxruntime-node is not installed; LPIPS is unavailable')
  }
  const session = await ort.InferenceSession.create(config.modelPath, { executionProviders: ['cpu'] })
  const toTensor = (img: Image) => {
    const chw = new Float32Array(3 * img.height * img.width)
    for (let c = 0; c < 3; c++) {
      for (let i = 0; i < img.width * img.height; i++) {
        chw[c * img.width * img.height + i] = img.data[3 * i + c] * 2 - 1
      }
    }
    return new ort.Tensor('float32', chw, [1, 3, img.height, img.width])
  }
  const feeds: Record<string, unknown> = {}
  feeds[session.inputNames[0]] = toTensor(ref)
  feeds[session.inputNames[1]] = toTensor(test)
  const outputs = await session.run(feeds)
  const out = outputs[session.outputNames[0]].data as Float32Array
  return out[0]
}
