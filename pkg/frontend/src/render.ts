/** Batch rendering: one run directory in, the four standard figures out.
 *
 * Reads only the public CSV artifacts; refuses directories without a
 * manifest.  Output is deterministic SVG, so reruns are byte-identical.
 */

import * as fs from 'fs';
import * as path from 'path';

import { SchemaError, parseCsv, textColumn } from './csv';
import {
  figureConvergence,
  figureDensity,
  figureFlux,
  figureLadders,
} from './figures';

export interface ReportSpec {
  /** subset of FIGURES to render; defaults to all four */
  figures?: string[];
  outDir: string;
}

export const FIGURES = ['convergence', 'density', 'flux', 'ladders'];

const SCHEMAS: Record<string, string[]> = {
  'convergence.csv': ['iter', 'primal', 'dual', 'gap', 'feas', 'energy_residual', 'seconds'],
  'fields_m.csv': ['t', 'x', 'v', 'value'],
  'fields_w0.csv': ['t', 'x', 'v', 'value'],
  'sweep_regularity.csv': ['probe', 'delta', 'lhs', 'ratio'],
  'sweep_commutator.csv': ['eps', 'delta_x', 'l1'],
};

function readTable(runDir: string, file: string) {
  const full = path.join(runDir, file);
  if (!fs.existsSync(full)) {
    throw new SchemaError(`${runDir}: missing ${file}`);
  }
  const text = fs.readFileSync(full, 'utf8');
  return { text, table: parseCsv(text, file, SCHEMAS[file]) };
}

export function render(runDir: string, spec: ReportSpec): string[] {
  if (!fs.existsSync(path.join(runDir, 'manifest.txt'))) {
    throw new SchemaError(`${runDir}: not a run directory (missing manifest.txt)`);
  }
  const wanted = spec.figures ?? FIGURES;
  for (const name of wanted) {
    if (!FIGURES.includes(name)) {
      throw new SchemaError(`unknown figure "${name}"`);
    }
  }
  fs.mkdirSync(spec.outDir, { recursive: true });
  const written: string[] = [];
  const emit = (name: string, svg: string) => {
    const out = path.join(spec.outDir, `${name}.svg`);
    fs.writeFileSync(out, svg);
    written.push(out);
  };
  if (wanted.includes('convergence')) {
    emit('convergence', figureConvergence(readTable(runDir, 'convergence.csv').table));
  }
  if (wanted.includes('density')) {
    emit('density', figureDensity(readTable(runDir, 'fields_m.csv').table));
  }
  if (wanted.includes('flux')) {
    emit('flux', figureFlux(readTable(runDir, 'fields_w0.csv').table));
  }
  if (wanted.includes('ladders')) {
    const reg = readTable(runDir, 'sweep_regularity.csv');
    const com = readTable(runDir, 'sweep_commutator.csv');
    const probes = textColumn(reg.text, 'sweep_regularity.csv', 'probe');
    emit('ladders', figureLadders(reg.table, probes, com.table));
  }
  return written;
}
