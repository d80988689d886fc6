/**
 * Rate-distortion figures from the codec's rd-sweep CSV, written as SVG.
 */

export interface RdPoint {
  lambda: number
  bpp: number
  latentMse: number
}

export class PlotError extends Error {}

export function parseSweepCsv(text: string): RdPoint[] {
  const lines = text.trim().split(/\r?\n/)
  if (lines.length < 2) throw new PlotError('CSV has no data rows')
  const header = lines[0].split(',').map((s) => s.trim())
  const iLambda = header.indexOf('lambda')
  const iBpp = header.indexOf('bpp')
  const iMse = header.indexOf('latent_mse')
  if (iLambda < 0 || iBpp < 0 || iMse < 0) {
    throw new PlotError(`CSV needs lambda,bpp,latent_mse columns, got ${header.join(',')}`)
  }
  const points: RdPoint[] = []
  for (const line of lines.slice(1)) {
    const cells = line.split(',')
    const lambda = parseFloat(cells[iLambda])
    const bpp = parseFloat(cells[iBpp])
    const mse = parseFloat(cells[iMse])
    if ([lambda, bpp, mse].some((v) => !Number.isFinite(v))) continue // failed sweep rows stay blank
    points.push({ lambda, bpp, latentMse: mse })
  }
  if (points.length === 0) throw new PlotError('CSV contained no finite rate-distortion points')
  return points.sort((a, b) => a.bpp - b.bpp)
}

const W = 640
const H = 440
const M = { left: 70, right: 20, top: 30, bottom: 55 }

function scaleOf(values: number[], lo: number, hi: number): (v: number) => number {
  const min = Math.min(...values)
  const max = Math.max(...values)
  const span = max - min || 1
  return (v: number) => lo + ((v - min) / span) * (hi - lo)
}

export function renderRdSvg(points: RdPoint[], title = 'rate-distortion sweep'): string {
  const xs = scaleOf(points.map((p) => p.bpp), M.left, W - M.right)
  const ys = scaleOf(points.map((p) => p.latentMse), H - M.bottom, M.top)
  const path = points.map((p, i) => `${i ? 'L' : 'M'}${xs(p.bpp).toFixed(1)},${ys(p.latentMse).toFixed(1)}`).join(' ')
  const dots = points.map((p) =>
    `<circle cx="${xs(p.bpp).toFixed(1)}" cy="${ys(p.latentMse).toFixed(1)}" r="4" fill="#1f6fb2">` +
    `<title>lambda=${p.lambda} bpp=${p.bpp.toFixed(4)} mse=${p.latentMse.toFixed(4)}</title></circle>`).join('\n  ')
  const labels = points.map((p) =>
    `<text x="${(xs(p.bpp) + 7).toFixed(1)}" y="${(ys(p.latentMse) - 7).toFixed(1)}" font-size="11">` +
    `λ=${p.lambda}</text>`).join('\n  ')
  const xTicks = points.map((p) =>
    `<text x="${xs(p.bpp).toFixed(1)}" y="${H - M.bottom + 18}" font-size="10" text-anchor="middle">` +
    `${p.bpp.toFixed(3)}</text>`).join('\n  ')
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">
  <rect width="${W}" height="${H}" fill="white"/>
  <text x="${W / 2}" y="18" text-anchor="middle" font-size="14">${title}</text>
  <line x1="${M.left}" y1="${H - M.bottom}" x2="${W - M.right}" y2="${H - M.bottom}" stroke="black"/>
  <line x1="${M.left}" y1="${M.top}" x2="${M.left}" y2="${H - M.bottom}" stroke="black"/>
  <text x="${W / 2}" y="${H - 12}" text-anchor="middle" font-size="12">bits per pixel</text>
  <text x="16" y="${H / 2}" font-size="12" transform="rotate(-90 16 ${H / 2})" text-anchor="middle">latent MSE</text>
  <path d="${path}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>
  ${dots}
  ${labels}
  ${xTicks}
</svg>
`
}
