/** Strict CSV parsing for the solver's run artifacts.
 *
 * Every table has a fixed header; unexpected or missing columns and
 * non-numeric cells are reported by column name and line number so a
 * schema drift upstream fails loudly instead of producing wrong figures.
 */

export class SchemaError extends Error {}

export interface Table {
  columns: string[];
  /** rows[i][j] is the numeric value of columns[j] in data row i */
  rows: number[][];
}

/** Columns whose cells are labels rather than numbers, per file. */
const TEXT_COLUMNS: Record<string, Set<string>> = {
  'sweep_regularity.csv': new Set(['probe']),
  'diagnostics.csv': new Set(['name', 'param']),
};

export function parseCsv(text: string, file: string, expected: string[]): Table {
  const lines = text.split('\n').filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${file}: file is empty`);
  }
  const columns = lines[0].split(',');
  for (const name of expected) {
    if (!columns.includes(name)) {
      throw new SchemaError(`${file}: missing column "${name}"`);
    }
  }
  for (const name of columns) {
    if (!expected.includes(name)) {
      throw new SchemaError(`${file}: unexpected column "${name}"`);
    }
  }
  if (lines.length === 1) {
    throw new SchemaError(`${file}: no data rows`);
  }
  const textCols = TEXT_COLUMNS[file] ?? new Set<string>();
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(',');
    if (cells.length !== columns.length) {
      throw new SchemaError(
        `${file}: line ${i + 1} has ${cells.length} cells, expected ${columns.length}`,
      );
    }
    const row: number[] = [];
    for (let j = 0; j < cells.length; j++) {
      if (textCols.has(columns[j])) {
        row.push(NaN);
        continue;
      }
      const value = Number(cells[j]);
      if (cells[j].trim() === '' || Number.isNaN(value)) {
        throw new SchemaError(
          `${file}: column "${columns[j]}": non-numeric value "${cells[j]}" at line ${i + 1}`,
        );
      }
      row.push(value);
    }
    rows.push(row);
  }
  return { columns, rows };
}

export function column(table: Table, name: string): number[] {
  const j = table.columns.indexOf(name);
  if (j < 0) {
    throw new SchemaError(`missing column "${name}"`);
  }
  return table.rows.map((row) => row[j]);
}

/** Text cells of a column (re-split from the raw lines is avoided by
 *  keeping label extraction alongside the numeric parse). */
export function textColumn(text: string, file: string, name: string): string[] {
  const lines = text.split('\n').filter((line) => line.length > 0);
  const columns = lines[0].split(',');
  const j = columns.indexOf(name);
  if (j < 0) {
    throw new SchemaError(`${file}: missing column "${name}"`);
  }
  return lines.slice(1).map((line) => line.split(',')[j]);
}
