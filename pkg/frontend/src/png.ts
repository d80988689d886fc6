/**
 * Minimal PNG and PPM image I/O, dependency-free.
 *
 * PNG support covers what the bridge needs: 8-bit depth, color types
 * 0 (gray), 2 (RGB) and 6 (RGBA), no interlacing. Writing always emits
 * color type 2. PPM (binary P6) is handy for quick fixtures.
 */

import { readFileSync, writeFileSync } from 'node:fs'
import { deflateSync, inflateSync } from 'node:zlib'

export interface Image {
  width: number
  height: number
  /** interleaved RGB in [0, 1], length width * height * 3 */
  data: Float32Array
}

export class ImageError extends Error {}

const PNG_SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a])

const CRC_TABLE = (() => {
  const table = new Uint32Array(256)
  for (let n = 0; n < 256; n++) {
    let c = n
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1
    table[n] = c >>> 0
  }
  return table
})()

function crc32(...parts: Buffer[]): number {
  let c = 0xffffffff
  for (const part of parts) {
    for (let i = 0; i < part.length; i++) c = CRC_TABLE[(c ^ part[i]) & 0xff] ^ (c >>> 8)
  }
  return (c ^ 0xffffffff) >>> 0
}

function chunk(type: string, body: Buffer): Buffer {
  const head = Buffer.alloc(8)
  head.writeUInt32BE(body.length, 0)
  head.write(type, 4, 'ascii')
  const crc = Buffer.alloc(4)
  crc.writeUInt32BE(crc32(head.subarray(4), body), 0)
  return Buffer.concat([head, body, crc])
}

export function encodePng(image: Image): Buffer {
  const { width, height } = image
  const ihdr = Buffer.alloc(13)
  ihdr.writeUInt32BE(width, 0)
  ihdr.writeUInt32BE(height, 4)
  ihdr.writeUInt8(8, 8) // bit depth
  ihdr.writeUInt8(2, 9) // color type RGB
  const raw = Buffer.alloc(height * (1 + width * 3))
  let pos = 0
  let src = 0
  for (let y = 0; y < height; y++) {
    raw[pos++] = 0 // filter none
    for (let x = 0; x < width * 3; x++) {
      const v = Math.round(Math.min(1, Math.max(0, image.data[src++])) * 255)
      raw[pos++] = v
    }
  }
  return Buffer.concat([
    PNG_SIGNATURE,
    chunk('IHDR', ihdr),
    chunk('IDAT', deflateSync(raw)),
    chunk('IEND', Buffer.alloc(0)),
  ])
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c
  const pa = Math.abs(p - a)
  const pb = Math.abs(p - b)
  const pc = Math.abs(p - c)
  if (pa <= pb && pa <= pc) return a
  return pb <= pc ? b : c
}

export function decodePng(data: Buffer): Image {
  if (!data.subarray(0, 8).equals(PNG_SIGNATURE)) throw new ImageError('not a PNG file')
  let pos = 8
  let width = 0
  let height = 0
  let colorType = -1
  const idat: Buffer[] = []
  while (pos + 8 <= data.length) {
    const len = data.readUInt32BE(pos)
    const type = data.toString('ascii', pos + 4, pos + 8)
    const body = data.subarray(pos + 8, pos + 8 + len)
    pos += 12 + len
    if (type === 'IHDR') {
      width = body.readUInt32BE(0)
      height = body.readUInt32BE(4)
      const depth = body.readUInt8(8)
      colorType = body.readUInt8(9)
      if (depth !== 8) throw new ImageError(`unsupported bit depth ${depth}`)
      if (![0, 2, 6].includes(colorType)) throw new ImageError(`unsupported color type ${colorType}`)
      if (body.readUInt8(12) !== 0) throw new ImageError('interlaced PNG unsupported')
    } else if (type === 'IDAT') {
      idat.push(body)
    } else if (type === 'IEND') {
      break
    }
  }
  if (!width || !height || colorType < 0) throw new ImageError('missing IHDR')
  const channels = colorType === 0 ? 1 : colorType === 2 ? 3 : 4
  const raw = inflateSync(Buffer.concat(idat))
  const stride = width * channels
  if (raw.length < height * (stride + 1)) throw new ImageError('PNG pixel data truncated')
  const pixels = Buffer.alloc(height * stride)
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)]
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1))
    const out = pixels.subarray(y * stride, (y + 1) * stride)
    const prev = y > 0 ? pixels.subarray((y - 1) * stride, y * stride) : Buffer.alloc(stride)
    for (let x = 0; x < stride; x++) {
      const left = x >= channels ? out[x - channels] : 0
      const up = prev[x]
      const upLeft = x >= channels ? prev[x - channels] : 0
      let v = row[x]
      if (filter === 1) v += left
      else if (filter === 2) v += up
      else if (filter === 3) v += (left + up) >> 1
      else if (filter === 4) v += paeth(left, up, upLeft)
      else if (filter !== 0) throw new ImageError(`unknown PNG filter ${filter}`)
      out[x] = v & 0xff
    }
  }
  const img: Image = { width, height, data: new Float32Array(width * height * 3) }
  for (let i = 0; i < width * height; i++) {
    if (channels === 1) {
      const g = pixels[i] / 255
      img.data[3 * i] = img.data[3 * i + 1] = img.data[3 * i + 2] = g
    } else {
      img.data[3 * i] = pixels[channels * i] / 255
      img.data[3 * i + 1] = pixels[channels * i + 1] / 255
      img.data[3 * i + 2] = pixels[channels * i + 2] / 255
    }
  }
  return img
}

export function encodePpm(image: Image): Buffer {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, 'ascii')
  const body = Buffer.alloc(image.width * image.height * 3)
  for (let i = 0; i < body.length; i++) {
    body[i] = Math.round(Math.min(1, Math.max(0, image.data[i])) * 255)
  }
  return Buffer.concat([header, body])
}

export function decodePpm(data: Buffer): Image {
  const text = data.toString('latin1')
  const m = /^P6\s+(\d+)\s+(\d+)\s+255\s/.exec(text)
  if (!m) throw new ImageError('not a binary P6 PPM with maxval 255')
  const width = parseInt(m[1], 10)
  const height = parseInt(m[2], 10)
  const offset = m[0].length
  const need = width * height * 3
  if (data.length < offset + need) throw new ImageError('PPM pixel data truncated')
  const out = new Float32Array(need)
  for (let i = 0; i < need; i++) out[i] = data[offset + i] / 255
  return { width, height, data: out }
}

export function readImage(path: string): Image {
  const data = readFileSync(path)
  if (path.toLowerCase().endsWith('.ppm')) return decodePpm(data)
  return decodePng(data)
}

export function writeImage(image: Image, path: string): void {
  writeFileSync(path, path.toLowerCase().endsWith('.ppm') ? encodePpm(image) : encodePng(image))
}
