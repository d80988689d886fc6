/**
 * Autoencoder backends bridging image space and latent space.
 *
 * Named pretrained checkpoints ("sd", "sd-xl", "sd-in") run through ONNX
 * sessions loaded from a model directory; they are optional and need
 * onnxruntime-node plus exported encoder/decoder graphs. The built-in
 * "reference" backend is a deterministic 8x block-mean analysis /
 * bilinear synthesis pair so the whole pipeline (and its tests) runs
 * without any downloaded weights. Latents always travel through .clrt
 * files; the codec itself is reached only via those files and its CLI.
 */

import path from 'node:path'

import type { LatentTensor } from './clrt.js'
import type { Image } from './png.js'

export type ModelId = 'reference' | 'sd' | 'sd-xl' | 'sd-in'

export interface BridgeConfig {
  model: ModelId
  /** directory holding <model>/encoder.onnx and <model>/decoder.onnx */
  modelDir?: string
  /** latent scaling convention, applied once on export and once on import */
  scaleFactor: number
  device: 'cpu'
}

export const DOWNSCALE = 8
export const DEFAULT_SCALE_FACTOR = 0.18215
/** Amplitude of the reference model's scaled latents (real pretrained
 * autoencoders land near unit variance after their scale factor too). */
export const LATENT_GAIN = 3.0

export function defaultConfig(model: ModelId = 'reference', modelDir?: string): BridgeConfig {
  return { model, modelDir, scaleFactor: DEFAULT_SCALE_FACTOR, device: 'cpu' }
}

export class BackendError extends Error {}

/** Image dims not divisible by 8 are floor-cropped (the recorded dims are
 * the cropped ones, matching the latent exactly). */
export function croppedDims(width: number, height: number): { width: number; height: number } {
  return {
    width: Math.floor(width / DOWNSCALE) * DOWNSCALE,
    height: Math.floor(height / DOWNSCALE) * DOWNSCALE,
  }
}

// ---------------------------------------------------------------------------
// reference backend

function lumaOf(r: number, g: number, b: number): number {
  return 0.299 * r + 0.587 * g + 0.114 * b
}

/** 8x8 block means of (R, G, B, luma), shifted to [-1, 1], times scale. */
export function referenceEncode(image: Image, scaleFactor: number): LatentTensor {
  const { width, height } = croppedDims(image.width, image.height)
  if (width < DOWNSCALE || height < DOWNSCALE) {
    throw new BackendError(`image ${image.width}x${image.height} smaller than one ${DOWNSCALE}px block`)
  }
  const lh = height / DOWNSCALE
  const lw = width / DOWNSCALE
  const values = new Float32Array(4 * lh * lw)
  for (let by = 0; by < lh; by++) {
    for (let bx = 0; bx < lw; bx++) {
      let sr = 0
      let sg = 0
      let sb = 0
      for (let dy = 0; dy < DOWNSCALE; dy++) {
        for (let dx = 0; dx < DOWNSCALE; dx++) {
          const p = 3 * ((by * DOWNSCALE + dy) * image.width + (bx * DOWNSCALE + dx))
          sr += image.data[p]
          sg += image.data[p + 1]
          sb += image.data[p + 2]
        }
      }
      const n = DOWNSCALE * DOWNSCALE
      const idx = by * lw + bx
      const plane = lh * lw
      // native encoder amplitude, then the transmission scale convention
      const gain = (LATENT_GAIN / DEFAULT_SCALE_FACTOR) * scaleFactor
      values[idx] = (2 * (sr / n) - 1) * gain
      values[plane + idx] = (2 * (sg / n) - 1) * gain
      values[2 * plane + idx] = (2 * (sb / n) - 1) * gain
      values[3 * plane + idx] = (2 * lumaOf(sr / n, sg / n, sb / n) - 1) * gain
    }
  }
  return {
    channels: 4,
    latentHeight: lh,
    latentWidth: lw,
    imageHeight: height,
    imageWidth: width,
    values,
  }
}

function bilinearUp(plane: Float32Array, lh: number, lw: number, height: number, width: number): Float32Array {
  const out = new Float32Array(height * width)
  for (let y = 0; y < height; y++) {
    const fy = (y + 0.5) / DOWNSCALE - 0.5
    const y0 = Math.min(lh - 1, Math.max(0, Math.floor(fy)))
    const y1 = Math.min(lh - 1, y0 + 1)
    const wy = Math.min(1, Math.max(0, fy - y0))
    for (let x = 0; x < width; x++) {
      const fx = (x + 0.5) / DOWNSCALE - 0.5
      const x0 = Math.min(lw - 1, Math.max(0, Math.floor(fx)))
      const x1 = Math.min(lw - 1, x0 + 1)
      const wx = Math.min(1, Math.max(0, fx - x0))
      const top = plane[y0 * lw + x0] * (1 - wx) + plane[y0 * lw + x1] * wx
      const bot = plane[y1 * lw + x0] * (1 - wx) + plane[y1 * lw + x1] * wx
      out[y * width + x] = top * (1 - wy) + bot * wy
    }
  }
  return out
}

export function referenceDecode(latent: LatentTensor, scaleFactor: number): Image {
  const { latentHeight: lh, latentWidth: lw, imageHeight: height, imageWidth: width } = latent
  if (latent.channels !== 4) {
    throw new BackendError(`reference backend expects 4 latent channels, got ${latent.channels}`)
  }
  const plane = lh * lw
  const img: Image = { width, height, data: new Float32Array(width * height * 3) }
  const gain = (LATENT_GAIN / DEFAULT_SCALE_FACTOR) * scaleFactor
  for (let c = 0; c < 3; c++) {
    const unscaled = new Float32Array(plane)
    for (let i = 0; i < plane; i++) unscaled[i] = latent.values[c * plane + i] / gain
    const up = bilinearUp(unscaled, lh, lw, height, width)
    for (let i = 0; i < width * height; i++) {
      img.data[3 * i + c] = Math.min(1, Math.max(0, (up[i] + 1) / 2))
    }
  }
  return img
}

// ---------------------------------------------------------------------------
// optional ONNX backend for the pretrained checkpoints

interface OnnxSessions {
  run(encoderInput: Float32Array, dims: number[], decoder: boolean): Promise<{ data: Float32Array; dims: number[] }>
}

async function loadOnnx(config: BridgeConfig, graph: 'encoder' | 'decoder'): Promise<any> {
  if (!config.modelDir) {
    throw new BackendError(
      `model "${config.model}" needs --model-dir (or CLRIC_VAE_DIR) pointing at ${config.model}/${graph}.onnx`)
  }
  let ort: any
  try {
    ort = await import('onnxruntime-node')
  } catch {
    throw new BackendError('onnxruntime-node is not installed; pretrained backends are unavailable')
  }
  const file = path.join(config.modelDir, config.model, `${graph}.onnx`)
  return ort.InferenceSession.create(file, { executionProviders: ['cpu'] })
}

async function onnxEncode(image: Image, config: BridgeConfig): Promise<LatentTensor> {
  const ort = await import('onnxruntime-node')
  const session = await loadOnnx(config, 'encoder')
  const { width, height } = croppedDims(image.width, image.height)
  const chw = new Float32Array(3 * height * width)
  for (let c = 0; c < 3; c++) {
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        chw[c * height * width + y * width + x] = image.data[3 * (y * image.width + x) + c] * 2 - 1
      }
    }
  }
  const input = new ort.Tensor('float32', chw, [1, 3, height, width])
  const outputs = await session.run({ [session.inputNames[0]]: input })
  const moments = outputs[session.outputNames[0]]
  const outC = moments.dims[1]
  const lh = moments.dims[2]
  const lw = moments.dims[3]
  const c = outC >= 8 ? 4 : outC // encoders emitting moments carry mean+logvar
  const values = new Float32Array(c * lh * lw)
  for (let i = 0; i < values.length; i++) {
    values[i] = (moments.data as Float32Array)[i] * config.scaleFactor // posterior mean half
  }
  return { channels: c, latentHeight: lh, latentWidth: lw, imageHeight: height, imageWidth: width, values }
}

async function onnxDecode(latent: LatentTensor, config: BridgeConfig): Promise<Image> {
  const ort = await import('onnxruntime-node')
  const session = await loadOnnx(config, 'decoder')
  const scaled = new Float32Array(latent.values.length)
  for (let i = 0; i < scaled.length; i++) scaled[i] = latent.values[i] / config.scaleFactor
  const input = new ort.Tensor('float32', scaled,
    [1, latent.channels, latent.latentHeight, latent.latentWidth])
  const outputs = await session.run({ [session.inputNames[0]]: input })
  const img = outputs[session.outputNames[0]]
  const height = img.dims[2]
  const width = img.dims[3]
  const out: Image = { width, height, data: new Float32Array(width * height * 3) }
  const data = img.data as Float32Array
  for (let c = 0; c < 3; c++) {
    for (let i = 0; i < width * height; i++) {
      out.data[3 * i + c] = Math.min(1, Math.max(0, (data[c * width * height + i] + 1) / 2))
    }
  }
  return out
}

// ---------------------------------------------------------------------------
// public entry points

export async function exportLatent(image: Image, config: BridgeConfig): Promise<LatentTensor> {
  if (config.model === 'reference') return referenceEncode(image, config.scaleFactor)
  return onnxEncode(image, config)
}

export async function importImage(latent: LatentTensor, config: BridgeConfig): Promise<Image> {
  if (config.model === 'reference') return referenceDecode(latent, config.scaleFactor)
  return onnxDecode(latent, config)
}
