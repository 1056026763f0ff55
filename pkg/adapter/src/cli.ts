/**
 * convert: raw release directory -> canonical corpus files + embedding sidecar.
 *
 *   node dist/cli.js convert --raw <dir> --vectors <glove.txt> --out <dir>
 *        [--splits train,dev,test] [--expect-release-stats]
 *
 * Reads <raw>/<split>.tsv for each requested split that exists, writes
 * <out>/<split>.jsonl, one shared <out>/embeddings.txt restricted to the
 * corpus vocabulary, and <out>/stats.json. Unparseable blocks are logged and
 * skipped; more than 1% skipped is a hard failure.
 */

import * as fs from 'fs';
import * as path from 'path';
import { parseArgs } from 'util';

import { convertText, corpusVocabulary, enforceSkipBudget, toJsonl } from './canonical';
import { extractSubset, toSidecar } from './embeddings';
import { RELEASE_EXPECTATION, checkStats, computeStats } from './stats';
import { CanonicalParagraph } from './types';

function fail(message: string): never {
  console.error(`convert: error: ${message}`);
  process.exit(1);
}

export function runConvert(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      raw: { type: 'string' },
      vectors: { type: 'string' },
      out: { type: 'string' },
      splits: { type: 'string', default: 'train,dev,test' },
      'expect-release-stats': { type: 'boolean', default: false },
    },
  });
  if (!values.raw || !values.vectors || !values.out) {
    fail('--raw, --vectors and --out are required');
  }
  const splits = (values.splits as string).split(',').map((s) => s.trim());
  fs.mkdirSync(values.out as string, { recursive: true });

  const everything: CanonicalParagraph[] = [];
  const statsBySplit: Record<string, unknown> = {};
  let converted = 0;
  for (const split of splits) {
    const rawPath = path.join(values.raw as string, `${split}.tsv`);
    if (!fs.existsSync(rawPath)) {
      console.error(`convert: note: ${rawPath} not present, skipping split`);
      continue;
    }
    const result = convertText(fs.readFileSync(rawPath, 'utf-8'));
    for (const [id, why] of result.skipped) {
      console.error(`convert: skipped ${split}/${id}: ${why}`);
    }
    enforceSkipBudget(result);
    const outPath = path.join(values.out as string, `${split}.jsonl`);
    fs.writeFileSync(outPath, toJsonl(result.paragraphs));
    console.log(`wrote ${result.paragraphs.length} paragraphs to ${outPath}`);
    everything.push(...result.paragraphs);
    statsBySplit[split] = computeStats(result.paragraphs);
    converted += 1;
  }
  if (converted === 0) fail(`no <split>.tsv files found under ${values.raw}`);

  const vocabulary = corpusVocabulary(everything);
  const subset = extractSubset(fs.readFileSync(values.vectors as string, 'utf-8'), vocabulary);
  const sidecarPath = path.join(values.out as string, 'embeddings.txt');
  fs.writeFileSync(sidecarPath, toSidecar(subset));
  console.log(
    `wrote ${subset.order.length} vectors (dim ${subset.dim}) to ${sidecarPath}; ` +
    `${subset.missing} corpus tokens fall back to ${'<unk>'}`);

  const overall = computeStats(everything);
  const statsPath = path.join(values.out as string, 'stats.json');
  fs.writeFileSync(statsPath, JSON.stringify({ overall, splits: statsBySplit }, null, 2) + '\n');
  console.log(
    `overall: ${overall.paragraphs} paragraphs, ` +
    `${overall.avgSentences.toFixed(2)} sentences/paragraph, ` +
    `${overall.avgEntities.toFixed(2)} entities/paragraph`);

  if (values['expect-release-stats']) {
    const problems = checkStats(overall, RELEASE_EXPECTATION);
    if (problems.length > 0) {
      fail(`release statistics check failed: ${problems.join('; ')}`);
    }
    console.log('release statistics check passed');
  }
  return 0;
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  if (command !== 'convert') {
    fail(`unknown command ${command ?? '(none)'}; expected: convert`);
  }
  process.exit(runConvert(rest));
}

if (require.main === module) {
  main();
}
