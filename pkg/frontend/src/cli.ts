/** usage: node dist/cli.js RUN_DIR OUT_DIR [figure...] */

import { SchemaError } from './csv';
import { FIGURES, render } from './render';

function main(argv: string[]): number {
  if (argv.length < 2) {
    process.stderr.write(
      `usage: cli.js RUN_DIR OUT_DIR [figure...]\nfigures: ${FIGURES.join(', ')} (default all)\n`,
    );
    return 2;
  }
  const [runDir, outDir, ...figures] = argv;
  try {
    const written = render(runDir, {
      outDir,
      figures: figures.length > 0 ? figures : undefined,
    });
    for (const file of written) {
      process.stdout.write(`${file}\n`);
    }
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`error: ${err.message}\n`);
      return 2;
    }
    throw err;
  }
}

process.exit(main(process.argv.slice(2)));
