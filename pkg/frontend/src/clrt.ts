/**
 * Byte-exact reader/writer for the .clrt latent interchange format.
 *
 * Layout (little-endian): magic "CLRT" | version u16 | dtype u8 |
 * reserved u8 | C u32 | H_l u32 | W_l u32 | imageHeight u32 |
 * imageWidth u32 | C*H_l*W_l float32 payload (channel-major, row-major).
 */

import { readFileSync, writeFileSync } from 'node:fs'

export const LATENT_MAGIC = 'CLRT'
export const FORMAT_VERSION = 1
export const LATENT_HEADER_BYTES = 28

export interface LatentTensor {
  channels: number
  latentHeight: number
  latentWidth: number
  imageHeight: number
  imageWidth: number
  /** length channels * latentHeight * latentWidth, channel-major */
  values: Float32Array
}

export class FormatError extends Error {}

export function latentToBytes(latent: LatentTensor): Buffer {
  const { channels: c, latentHeight: h, latentWidth: w } = latent
  if (latent.values.length !== c * h * w) {
    throw new FormatError(`payload length ${latent.values.length} != ${c * h * w}`)
  }
  for (const v of latent.values) {
    if (!Number.isFinite(v)) throw new FormatError('latent payload contains non-finite values')
  }
  const buf = Buffer.alloc(LATENT_HEADER_BYTES + 4 * latent.values.length)
  buf.write(LATENT_MAGIC, 0, 'ascii')
  buf.writeUInt16LE(FORMAT_VERSION, 4)
  buf.writeUInt8(0, 6) // dtype 0 = float32 LE
  buf.writeUInt8(0, 7)
  buf.writeUInt32LE(c, 8)
  buf.writeUInt32LE(h, 12)
  buf.writeUInt32LE(w, 16)
  buf.writeUInt32LE(latent.imageHeight, 20)
  buf.writeUInt32LE(latent.imageWidth, 24)
  for (let i = 0; i < latent.values.length; i++) {
    buf.writeFloatLE(latent.values[i], LATENT_HEADER_BYTES + 4 * i)
  }
  return buf
}

export function latentFromBytes(data: Buffer): LatentTensor {
  if (data.length < LATENT_HEADER_BYTES) {
    throw new FormatError(`latent file is ${data.length} bytes, header needs ${LATENT_HEADER_BYTES}`)
  }
  if (data.toString('ascii', 0, 4) !== LATENT_MAGIC) {
    throw new FormatError(`bad latent magic ${JSON.stringify(data.toString('ascii', 0, 4))}`)
  }
  const version = data.readUInt16LE(4)
  if (version !== FORMAT_VERSION) throw new FormatError(`latent version ${version} unsupported`)
  const dtype = data.readUInt8(6)
  if (dtype !== 0) throw new FormatError(`latent dtype code ${dtype} unsupported`)
  const c = data.readUInt32LE(8)
  const h = data.readUInt32LE(12)
  const w = data.readUInt32LE(16)
  const imageHeight = data.readUInt32LE(20)
  const imageWidth = data.readUInt32LE(24)
  if (Math.min(c, h, w, imageHeight, imageWidth) < 1) {
    throw new FormatError('latent extents must all be >= 1')
  }
  const need = LATENT_HEADER_BYTES + 4 * c * h * w
  if (data.length < need) throw new FormatError(`latent payload truncated: ${data.length} < ${need}`)
  if (data.length > need) throw new FormatError(`${data.length - need} trailing bytes after latent payload`)
  const values = new Float32Array(c * h * w)
  for (let i = 0; i < values.length; i++) {
    values[i] = data.readFloatLE(LATENT_HEADER_BYTES + 4 * i)
    if (!Number.isFinite(values[i])) throw new FormatError('latent payload contains non-finite values')
  }
  return { channels: c, latentHeight: h, latentWidth: w, imageHeight, imageWidth, values }
}

export function writeLatent(latent: LatentTensor, path: string): void {
  writeFileSync(path, latentToBytes(latent))
}

export function readLatent(path: string): LatentTensor {
  return latentFromBytes(readFileSync(path))
}
