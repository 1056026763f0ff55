/**
 * Raw paragraphs -> canonical line-delimited records.
 *
 * The output schema is the tracking engine's corpus interface: tokens carry
 * surface/pos/is_verb, entities carry name + alias variants, and grids keep
 * their T+1 columns untouched.
 */

import { parseRawGrids, splitAliases } from './raw';
import { tagSentence } from './postag';
import { CanonicalParagraph } from './types';

export interface ConversionResult {
  paragraphs: CanonicalParagraph[];
  skipped: Array<[string, string]>;
  totalBlocks: number;
}

export const MAX_SKIP_RATE = 0.01;

export function convertText(rawText: string): ConversionResult {
  const report = parseRawGrids(rawText);
  const paragraphs = report.paragraphs.map((raw): CanonicalParagraph => ({
    id: raw.id,
    sentences: raw.sentences.map(tagSentence),
    entities: raw.participants.map((cell) => {
      const aliases = splitAliases(cell);
      return { name: aliases[0], aliases };
    }),
    grid: raw.grid,
  }));
  return { paragraphs, skipped: report.skipped, totalBlocks: report.totalBlocks };
}

export function enforceSkipBudget(result: ConversionResult): void {
  if (result.totalBlocks === 0) return;
  const rate = result.skipped.length / result.totalBlocks;
  if (rate > MAX_SKIP_RATE) {
    const samples = result.skipped.slice(0, 3).map(([id, why]) => `${id}: ${why}`);
    throw new Error(
      `skip rate ${(rate * 100).toFixed(1)}% exceeds ${MAX_SKIP_RATE * 100}% ` +
      `(${result.skipped.length}/${result.totalBlocks}); e.g. ${samples.join('; ')}`);
  }
}

/** Stable serialization: sorted keys, one paragraph per line. */
export function toJsonl(paragraphs: CanonicalParagraph[]): string {
  const lines = paragraphs.map((p) =>
    JSON.stringify(p, Object.keys(flatten(p)).sort()));
  return lines.join('\n') + (lines.length > 0 ? '\n' : '');
}

function flatten(obj: unknown, keys: Record<string, true> = {}): Record<string, true> {
  if (Array.isArray(obj)) {
    for (const item of obj) flatten(item, keys);
  } else if (obj !== null && typeof obj === 'object') {
    for (const [k, v] of Object.entries(obj)) {
      keys[k] = true;
      flatten(v, keys);
    }
  }
  return keys;
}

export function corpusVocabulary(paragraphs: CanonicalParagraph[]): Set<string> {
  const vocab = new Set<string>();
  for (const p of paragraphs) {
    for (const sent of p.sentences) {
      for (const tok of sent) vocab.add(tok.surface.toLowerCase());
    }
  }
  return vocab;
}
