#!/usr/bin/env node
/**
 * Bridge CLI: export (image -> .clrt), import (.clrt -> image),
 * eval (image metrics), plot-rd (codec CSV -> SVG figure).
 *
 * JSON to stdout, diagnostics to stderr. Exit codes: 0 ok, 2 usage or
 * file I/O, 3 malformed input file.
 */

import { readFileSync, writeFileSync } from 'node:fs'
import { parseArgs } from 'node:util'
import process from 'node:process'

import { FormatError, readLatent, writeLatent } from './clrt.js'
import { lpips, msSsim, psnr, MetricsError } from './metrics.js'
import { ImageError, readImage, writeImage } from './png.js'
import { parseSweepCsv, renderRdSvg, PlotError } from './plot.js'
import { BackendError, defaultConfig, exportLatent, importImage, type ModelId } from './vae.js'

const EXIT_USAGE_IO = 2
const EXIT_BAD_FILE = 3

function fail(code: number, message: string): never {
  process.stderr.write(`error: ${message}\n`)
  process.exit(code)
}

function emit(record: Record<string, unknown>): void {
  process.stdout.write(JSON.stringify({ schema_version: 1, ...record }, (_k, v) =>
    typeof v === 'number' && !Number.isFinite(v) ? (v > 0 ? 'inf' : '-inf') : v) + '\n')
}

function bridgeConfig(values: Record<string, unknown>) {
  const model = (values.model as ModelId) ?? 'reference'
  if (!['reference', 'sd', 'sd-xl', 'sd-in'].includes(model)) {
    fail(EXIT_USAGE_IO, `unknown model "${model}" (reference | sd | sd-xl | sd-in)`)
  }
  const config = defaultConfig(model, (values['model-dir'] as string) ?? process.env.CLRIC_VAE_DIR)
  if (values.scale !== undefined) config.scaleFactor = parseFloat(values.scale as string)
  if (!Number.isFinite(config.scaleFactor) || config.scaleFactor <= 0) {
    fail(EXIT_USAGE_IO, `scale factor must be positive, got ${values.scale}`)
  }
  return config
}

async function cmdExport(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      image: { type: 'string' },
      latent: { type: 'string' },
      model: { type: 'string' },
      'model-dir': { type: 'string' },
      scale: { type: 'string' },
    },
  })
  if (!values.image || !values.latent) fail(EXIT_USAGE_IO, 'export needs --image and --latent')
  const config = bridgeConfig(values)
  let image
  try {
    image = readImage(values.image)
  } catch (e) {
    fail(e instanceof ImageError ? EXIT_BAD_FILE : EXIT_USAGE_IO, `cannot read image: ${(e as Error).message}`)
  }
  const latent = await exportLatent(image, config)
  writeLatent(latent, values.latent)
  emit({
    command: 'export',
    model: config.model,
    scale_factor: config.scaleFactor,
    channels: latent.channels,
    latent_height: latent.latentHeight,
    latent_width: latent.latentWidth,
    image_height: latent.imageHeight,
    image_width: latent.imageWidth,
    latent_out: values.latent,
  })
}

async function cmdImport(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      latent: { type: 'string' },
      image: { type: 'string' },
      model: { type: 'string' },
      'model-dir': { type: 'string' },
      scale: { type: 'string' },
    },
  })
  if (!values.latent || !values.image) fail(EXIT_USAGE_IO, 'import needs --latent and --image')
  const config = bridgeConfig(values)
  let latent
  try {
    latent = readLatent(values.latent)
  } catch (e) {
    fail(e instanceof FormatError ? EXIT_BAD_FILE : EXIT_USAGE_IO, `cannot read latent: ${(e as Error).message}`)
  }
  const image = await importImage(latent, config)
  writeImage(image, values.image)
  emit({
    command: 'import',
    model: config.model,
    image_out: values.image,
    image_height: image.height,
    image_width: image.width,
  })
}

async function cmdEval(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      ref: { type: 'string' },
      test: { type: 'string' },
      'lpips-model': { type: 'string' },
    },
  })
  if (!values.ref || !values.test) fail(EXIT_USAGE_IO, 'eval needs --ref and --test')
  let ref, test
  try {
    ref = readImage(values.ref)
    test = readImage(values.test)
  } catch (e) {
    fail(e instanceof ImageError ? EXIT_BAD_FILE : EXIT_USAGE_IO, `cannot read image: ${(e as Error).message}`)
  }
  const record: Record<string, unknown> = { command: 'eval' }
  try {
    record.psnr_db = psnr(ref, test)
    record.ms_ssim = msSsim(ref, test)
  } catch (e) {
    fail(EXIT_USAGE_IO, (e as Error).message)
  }
  const lpipsModel = values['lpips-model'] ?? process.env.CLRIC_LPIPS_ONNX
  if (lpipsModel) {
    try {
      record.lpips = await lpips(ref, test, { modelPath: lpipsModel })
      record.lpips_backbone = lpipsModel
    } catch (e) {
      fail(EXIT_USAGE_IO, (e as Error).message)
    }
  } else {
    record.lpips = null
    record.lpips_backbone = 'unavailable'
  }
  emit(record)
}

function cmdPlotRd(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      csv: { type: 'string' },
      out: { type: 'string' },
      title: { type: 'string' },
    },
  })
  if (!values.csv || !values.out) fail(EXIT_USAGE_IO, 'plot-rd needs --csv and --out')
  let text: string
  try {
    text = readFileSync(values.csv, 'utf-8')
  } catch (e) {
    fail(EXIT_USAGE_IO, `cannot read csv: ${(e as Error).message}`)
  }
  let points
  try {
    points = parseSweepCsv(text)
  } catch (e) {
    fail(e instanceof PlotError ? EXIT_BAD_FILE : EXIT_USAGE_IO, (e as Error).message)
  }
  writeFileSync(values.out, renderRdSvg(points, values.title ?? 'rate-distortion sweep'))
  emit({ command: 'plot-rd', points: points.length, svg: values.out })
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2)
  try {
    switch (command) {
      case 'export':
        await cmdExport(rest)
        break
      case 'import':
        await cmdImport(rest)
        break
      case 'eval':
        await cmdEval(rest)
        break
      case 'plot-rd':
        cmdPlotRd(rest)
        break
      default:
        fail(EXIT_USAGE_IO, `usage: clric-bridge <export|import|eval|plot-rd> [flags]`)
    }
  } catch (e) {
    if (e instanceof BackendError || e instanceof MetricsError) fail(EXIT_USAGE_IO, e.message)
    if (e instanceof FormatError || e instanceof ImageError || e instanceof PlotError) {
      fail(EXIT_BAD_FILE, e.message)
    }
    throw e
  }
}

main().catch((e) => {
  process.stderr.write(`error: ${e?.stack ?? e}\n`)
  process.exit(1)
})
