import assert from 'node:assert/strict'
import { execFileSync } from 'node:child_process'
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import path from 'node:path'
import test from 'node:test'

import { latentFromBytes, latentToBytes, readLatent, writeLatent, FormatError, type LatentTensor } from '../src/clrt.js'

function sampleLatent(): LatentTensor {
  const values = new Float32Array(2 * 3 * 4)
  for (let i = 0; i < values.length; i++) values[i] = Math.sin(i) * 2
  return { channels: 2, latentHeight: 3, latentWidth: 4, imageHeight: 24, imageWidth: 32, values }
}

test('latent bytes round trip', () => {
  const latent = sampleLatent()
  const out = latentFromBytes(latentToBytes(latent))
  assert.deepEqual(Array.from(out.values), Array.from(latent.values))
  assert.equal(out.imageHeight, 24)
  assert.equal(out.imageWidth, 32)
})

test('file size matches 28 + 4*C*H*W', () => {
  const latent = sampleLatent()
  assert.equal(latentToBytes(latent).length, 28 + 4 * 2 * 3 * 4)
})

test('bad magic, truncation and trailing bytes are rejected', () => {
  const good = latentToBytes(sampleLatent())
  const bad = Buffer.from(good)
  bad.write('XLRT', 0, 'ascii')
  assert.throws(() => latentFromBytes(bad), FormatError)
  assert.throws(() => latentFromBytes(good.subarray(0, good.length - 2)), FormatError)
  assert.throws(() => latentFromBytes(Buffer.concat([good, Buffer.from([0])])), FormatError)
})

test('non-finite payload rejected', () => {
  const latent = sampleLatent()
  latent.values[0] = Infinity
  assert.throws(() => latentToBytes(latent), FormatError)
})

function havePython(): boolean {
  try {
    execFileSync('python3', ['-c', 'import clric'], { stdio: 'ignore' })
    return true
  } catch {
    return false
  }
}

test('byte-exact interop with the codec package', { skip: !havePython() ? 'python3 + clric unavailable' : false }, () => {
  const dir = mkdtempSync(path.join(tmpdir(), 'clrt-interop-'))
  const fromPy = path.join(dir, 'py.clrt')
  execFileSync('python3', ['-c', `
from clric import bitstream, synthetic
lt = synthetic.smooth_latent(channels=2, height=6, width=8, image_height=48, image_width=64, seed=3)
bitstream.write_latent(lt, ${JSON.stringify(fromPy)})
`])
  const latent = readLatent(fromPy)
  assert.equal(latent.channels, 2)
  assert.equal(latent.latentHeight, 6)
  assert.equal(latent.latentWidth, 8)

  // write it back from TS and let the Python side verify byte equality
  const fromTs = path.join(dir, 'ts.clrt')
  writeLatent(latent, fromTs)
  assert.deepEqual(readFileSync(fromTs), readFileSync(fromPy))
  execFileSync('python3', ['-c', `
from clric import bitstream
a = bitstream.read_latent(${JSON.stringify(fromPy)})
b = bitstream.read_latent(${JSON.stringify(fromTs)})
assert a.values.tobytes() == b.values.tobytes()
`])
})
