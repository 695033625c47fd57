/** Least-squares slope fits; figures never trust upstream slope values
 *  and always refit from the ladder CSVs. */

export function fitSlope(x: number[], y: number[]): number {
  if (x.length !== y.length || x.length < 2) {
    throw new Error(`slope fit needs at least 2 points, got ${x.length}`);
  }
  const n = x.length;
  const mx = x.reduce((a, b) => a + b, 0) / n;
  const my = y.reduce((a, b) => a + b, 0) / n;
  let num = 0;
  let den = 0;
  for (let i = 0; i < n; i++) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  if (den === 0) {
    throw new Error('slope fit is degenerate: all abscissae equal');
  }
  return num / den;
}

/** Slope of log y against log x; requires strictly positive data. */
export function fitLogSlope(x: number[], y: number[]): number {
  for (let i = 0; i < x.length; i++) {
    if (!(x[i] > 0) || !(y[i] > 0)) {
      throw new Error(`log-log fit needs positive data, got (${x[i]}, ${y[i]})`);
    }
  }
  return fitSlope(x.map(Math.log), y.map(Math.log));
}
