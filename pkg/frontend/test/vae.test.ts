import assert from 'node:assert/strict'
import test from 'node:test'

import { psnr } from '../src/metrics.js'
import type { Image } from '../src/png.js'
import { croppedDims, defaultConfig, referenceDecode, referenceEncode } from '../src/vae.js'

function smoothImage(width: number, height: number): Image {
  const data = new Float32Array(width * height * 3)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = 3 * (y * width + x)
      data[i] = 0.5 + 0.4 * Math.sin((2 * Math.PI * x) / width)
      data[i + 1] = 0.5 + 0.4 * Math.cos((2 * Math.PI * y) / height)
      data[i + 2] = 0.5 + 0.3 * Math.sin((2 * Math.PI * (x + y)) / (width + height))
    }
  }
  return { width, height, data }
}

test('512x768 image maps to a 64x96 latent with 4 channels', () => {
  const latent = referenceEncode(smoothImage(768, 512), 0.18215)
  assert.equal(latent.channels, 4)
  assert.equal(latent.latentHeight, 64)
  assert.equal(latent.latentWidth, 96)
  assert.equal(latent.imageHeight, 512)
  assert.equal(latent.imageWidth, 768)
})

test('1363x2048 image floor-crops to a 170x256 latent', () => {
  assert.deepEqual(croppedDims(2048, 1363), { width: 2048, height: 1360 })
  const latent = referenceEncode(smoothImage(2048, 1363), 0.18215)
  assert.equal(latent.latentHeight, 170)
  assert.equal(latent.latentWidth, 256)
  assert.equal(latent.imageHeight, 1360) // recorded dims are the cropped ones
})

test('export is deterministic', () => {
  const img = smoothImage(128, 96)
  const a = referenceEncode(img, 0.18215)
  const b = referenceEncode(img, 0.18215)
  assert.deepEqual(Array.from(a.values), Array.from(b.values))
})

test('scaling convention is applied exactly once each way', () => {
  const img = smoothImage(64, 64)
  for (const scale of [0.1, 0.18215, 1.0]) {
    const latent = referenceEncode(img, scale)
    const back = referenceDecode(latent, scale)
    const quality = psnr(img, back)
    assert.ok(quality > 25, `scale ${scale}: psnr ${quality}`)
  }
  // mismatched import scaling must visibly damage the round trip
  const latent = referenceEncode(img, 0.18215)
  const wrong = referenceDecode(latent, 1.0)
  assert.ok(psnr(img, wrong) < 20)
})

test('round trip of a smooth image preserves quality', () => {
  const img = smoothImage(192, 128)
  const back = referenceDecode(referenceEncode(img, 0.18215), 0.18215)
  assert.equal(back.width, 192)
  assert.equal(back.height, 128)
  assert.ok(psnr(img, back) > 28)
})

test('all-zero latent imports without crashing', () => {
  const latent = referenceEncode(smoothImage(64, 64), 0.18215)
  latent.values.fill(0)
  const img = referenceDecode(latent, 0.18215)
  assert.equal(img.width, 64)
  for (const v of img.data) assert.ok(Number.isFinite(v))
})

test('default config carries the canonical scale factor', () => {
  const config = defaultConfig()
  assert.equal(config.model, 'reference')
  assert.ok(Math.abs(config.scaleFactor - 0.18215) < 1e-12)
})
