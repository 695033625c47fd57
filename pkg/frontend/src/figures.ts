/** Deterministic SVG figure builders for the run artifacts.
 *
 * Pure string assembly: same tables in, byte-identical SVG out.  No
 * timestamps, no randomness, no plotting dependency.
 */

import { Table, column } from './csv';
import { fitLogSlope } from './slope';

const WIDTH = 640;
const HEIGHT = 440;
const MARGIN = { left: 70, right: 20, top: 40, bottom: 50 };
const COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e'];

function fmt(x: number): string {
  return Number(x.toPrecision(6)).toString();
}

interface Series {
  label: string;
  x: number[];
  y: number[];
}

interface PlotSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  logX?: boolean;
  logY?: boolean;
}

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  return [lo, hi];
}

function ticks(lo: number, hi: number, log: boolean): number[] {
  if (log) {
    const out: number[] = [];
    for (let e = Math.ceil(lo); e <= Math.floor(hi); e++) out.push(e);
    if (out.length >= 2) return out;
  }
  const out: number[] = [];
  for (let i = 0; i <= 4; i++) out.push(lo + ((hi - lo) * i) / 4);
  return out;
}

function tickText(t: number, log: boolean): string {
  return log ? `1e${t}` : fmt(t);
}

/** Shared cartesian frame: axes, ticks, title; body drawn by `draw`. */
function frame(spec: PlotSpec): string {
  const tx = (v: number) => (spec.logX ? Math.log10(v) : v);
  const ty = (v: number) => (spec.logY ? Math.log10(v) : v);
  const xs: number[] = [];
  const ys: number[] = [];
  for (const s of spec.series) {
    for (let i = 0; i < s.x.length; i++) {
      if (spec.logX && !(s.x[i] > 0)) continue;
      if (spec.logY && !(s.y[i] > 0)) continue;
      xs.push(tx(s.x[i]));
      ys.push(ty(s.y[i]));
    }
  }
  if (xs.length === 0) {
    throw new Error(`figure "${spec.title}": no plottable points`);
  }
  const [x0, x1] = extent(xs);
  const [y0, y1] = extent(ys);
  const px = (v: number) =>
    MARGIN.left + ((v - x0) / (x1 - x0)) * (WIDTH - MARGIN.left - MARGIN.right);
  const py = (v: number) =>
    HEIGHT - MARGIN.bottom - ((v - y0) / (y1 - y0)) * (HEIGHT - MARGIN.top - MARGIN.bottom);

  const parts: string[] = [];
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${WIDTH - MARGIN.left - MARGIN.right}"` +
      ` height="${HEIGHT - MARGIN.top - MARGIN.bottom}" fill="none" stroke="#333"/>`,
  );
  for (const t of ticks(x0, x1, !!spec.logX)) {
    const x = px(t);
    parts.push(`<line x1="${fmt(x)}" y1="${HEIGHT - MARGIN.bottom}" x2="${fmt(x)}" y2="${HEIGHT - MARGIN.bottom + 5}" stroke="#333"/>`);
    parts.push(`<text x="${fmt(x)}" y="${HEIGHT - MARGIN.bottom + 18}" text-anchor="middle" font-size="11">${tickText(t, !!spec.logX)}</text>`);
  }
  for (const t of ticks(y0, y1, !!spec.logY)) {
    const y = py(t);
    parts.push(`<line x1="${MARGIN.left - 5}" y1="${fmt(y)}" x2="${MARGIN.left}" y2="${fmt(y)}" stroke="#333"/>`);
    parts.push(`<text x="${MARGIN.left - 8}" y="${fmt(y + 4)}" text-anchor="end" font-size="11">${tickText(t, !!spec.logY)}</text>`);
  }
  spec.series.forEach((s, si) => {
    const pts: string[] = [];
    for (let i = 0; i < s.x.length; i++) {
      if (spec.logX && !(s.x[i] > 0)) continue;
      if (spec.logY && !(s.y[i] > 0)) continue;
      pts.push(`${fmt(px(tx(s.x[i])))},${fmt(py(ty(s.y[i])))}`);
    }
    const color = COLORS[si % COLORS.length];
    parts.push(`<polyline points="${pts.join(' ')}" fill="none" stroke="${color}" stroke-width="1.5"/>`);
    for (const p of pts) {
      const [cx, cy] = p.split(',');
      parts.push(`<circle cx="${cx}" cy="${cy}" r="2.5" fill="${color}"/>`);
    }
    parts.push(
      `<text x="${WIDTH - MARGIN.right - 8}" y="${MARGIN.top + 16 + 16 * si}" text-anchor="end"` +
        ` font-size="12" fill="${color}">${s.label}</text>`,
    );
  });
  parts.push(`<text x="${WIDTH / 2}" y="${MARGIN.top - 14}" text-anchor="middle" font-size="14">${spec.title}</text>`);
  parts.push(`<text x="${WIDTH / 2}" y="${HEIGHT - 12}" text-anchor="middle" font-size="12">${spec.xLabel}</text>`);
  parts.push(
    `<text x="16" y="${HEIGHT / 2}" text-anchor="middle" font-size="12"` +
      ` transform="rotate(-90 16 ${HEIGHT / 2})">${spec.yLabel}</text>`,
  );
  return svgDoc(parts.join('\n'));
}

function svgDoc(body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}"` +
    ` viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="sans-serif">\n` +
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>\n${body}\n</svg>\n`
  );
}

/** Blue-to-yellow ramp for density heatmaps. */
function rampColor(t: number): string {
  const stops = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
  ];
  const s = Math.min(Math.max(t, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(s), stops.length - 2);
  const f = s - i;
  const mix = stops[i].map((a, j) => Math.round(a + f * (stops[i + 1][j] - a)));
  return `rgb(${mix[0]},${mix[1]},${mix[2]})`;
}

function uniqueSorted(values: number[]): number[] {
  return [...new Set(values)].sort((a, b) => a - b);
}

/** Figure 1: duality gap and energy residual against iteration, log scale. */
export function figureConvergence(conv: Table): string {
  const iter = column(conv, 'iter');
  const gap = column(conv, 'gap').map(Math.abs);
  const energy = column(conv, 'energy_residual');
  return frame({
    title: 'convergence',
    xLabel: 'iteration',
    yLabel: 'residual',
    logY: true,
    series: [
      { label: '|duality gap|', x: iter, y: gap },
      { label: 'energy residual', x: iter, y: energy },
    ],
  });
}

/** Figure 2: heatmap of the density slice m(t, x, v) at the final time. */
export function figureDensity(m: Table): string {
  const t = column(m, 't');
  const tSel = Math.max(...t);
  const keep = t.map((v) => v === tSel);
  const xVals = uniqueSorted(column(m, 'x').filter((_, i) => keep[i]));
  const vVals = uniqueSorted(column(m, 'v').filter((_, i) => keep[i]));
  const xCol = column(m, 'x');
  const vCol = column(m, 'v');
  const val = column(m, 'value');
  const grid: number[][] = vVals.map(() => xVals.map(() => 0));
  let vmax = 0;
  for (let i = 0; i < val.length; i++) {
    if (!keep[i]) continue;
    const r = vVals.indexOf(vCol[i]);
    const c = xVals.indexOf(xCol[i]);
    grid[r][c] = val[i];
    if (val[i] > vmax) vmax = val[i];
  }
  if (vmax <= 0) vmax = 1;
  const iw = (WIDTH - MARGIN.left - MARGIN.right) / xVals.length;
  const ih = (HEIGHT - MARGIN.top - MARGIN.bottom) / vVals.length;
  const parts: string[] = [];
  for (let r = 0; r < vVals.length; r++) {
    for (let c = 0; c < xVals.length; c++) {
      const x = MARGIN.left + c * iw;
      // v increases upward
      const y = HEIGHT - MARGIN.bottom - (r + 1) * ih;
      parts.push(
        `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(iw + 0.5)}" height="${fmt(ih + 0.5)}"` +
          ` fill="${rampColor(grid[r][c] / vmax)}"/>`,
      );
    }
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${WIDTH - MARGIN.left - MARGIN.right}"` +
      ` height="${HEIGHT - MARGIN.top - MARGIN.bottom}" fill="none" stroke="#333"/>`,
  );
  parts.push(`<text x="${WIDTH / 2}" y="${MARGIN.top - 14}" text-anchor="middle" font-size="14">density m at t = ${fmt(tSel)} (max ${fmt(vmax)})</text>`);
  parts.push(`<text x="${WIDTH / 2}" y="${HEIGHT - 12}" text-anchor="middle" font-size="12">x</text>`);
  parts.push(
    `<text x="16" y="${HEIGHT / 2}" text-anchor="middle" font-size="12"` +
      ` transform="rotate(-90 16 ${HEIGHT / 2})">v</text>`,
  );
  return svgDoc(parts.join('\n'));
}

/** Figure 3: flux profiles w0(x) at mid time for low/middle/high v. */
export function figureFlux(w0: Table): string {
  const t = column(w0, 't');
  const tVals = uniqueSorted(t);
  const tSel = tVals[Math.floor(tVals.length / 2)];
  const keep = t.map((v) => v === tSel);
  const xCol = column(w0, 'x');
  const vCol = column(w0, 'v');
  const val = column(w0, 'value');
  const vVals = uniqueSorted(vCol.filter((_, i) => keep[i]));
  const picks = [
    vVals[Math.floor(vVals.length / 4)],
    vVals[Math.floor(vVals.length / 2)],
    vVals[Math.floor((3 * vVals.length) / 4)],
  ];
  const series: Series[] = picks.map((vSel) => {
    const pts: Array<[number, number]> = [];
    for (let i = 0; i < val.length; i++) {
      if (keep[i] && vCol[i] === vSel) pts.push([xCol[i], val[i]]);
    }
    pts.sort((a, b) => a[0] - b[0]);
    return {
      label: `v = ${fmt(vSel)}`,
      x: pts.map((p) => p[0]),
      y: pts.map((p) => p[1]),
    };
  });
  return frame({
    title: `flux w at t = ${fmt(tSel)}`,
    xLabel: 'x',
    yLabel: 'w',
    series,
  });
}

/** Figure 4: log-log ladders with slopes refitted from the sweep CSVs. */
export function figureLadders(
  reg: Table,
  regProbes: string[],
  com: Table,
): string {
  const delta = column(reg, 'delta');
  const lhs = column(reg, 'lhs');
  const probes = [...new Set(regProbes)];
  const series: Series[] = probes.map((name) => {
    const x = delta.filter((_, i) => regProbes[i] === name);
    const y = lhs.filter((_, i) => regProbes[i] === name);
    const slope = fitLogSlope(x, y);
    return { label: `${name} (slope ${fmt(slope)})`, x, y };
  });

  const eps = column(com, 'eps');
  const dx = column(com, 'delta_x');
  const l1 = column(com, 'l1');
  const dxMin = Math.min(...dx);
  const epsMin = Math.min(...eps);
  const epsX = eps.filter((_, i) => dx[i] === dxMin);
  const epsY = l1.filter((_, i) => dx[i] === dxMin);
  const dxX = dx.filter((_, i) => eps[i] === epsMin);
  const dxY = l1.filter((_, i) => eps[i] === epsMin);
  series.push({
    label: `commutator vs eps (slope ${fmt(fitLogSlope(epsX, epsY))})`,
    x: epsX,
    y: epsY,
  });
  series.push({
    label: `commutator vs delta_x (slope ${fmt(fitLogSlope(dxX, dxY))})`,
    x: dxX,
    y: dxY,
  });
  return frame({
    title: 'probe ladders (log-log, refitted slopes)',
    xLabel: 'ladder parameter',
    yLabel: 'probe value',
    logX: true,
    logY: true,
    series,
  });
}
