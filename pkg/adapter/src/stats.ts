/** Corpus statistics and the release-scale expectation check. */

import { CanonicalParagraph } from './types';

export interface CorpusStats {
  paragraphs: number;
  sentences: number;
  entities: number;
  avgSentences: number;
  avgEntities: number;
}

export function computeStats(paragraphs: CanonicalParagraph[]): CorpusStats {
  const sentences = paragraphs.reduce((n, p) => n + p.sentences.length, 0);
  const entities = paragraphs.reduce((n, p) => n + p.entities.length, 0);
  const n = paragraphs.length;
  return {
    paragraphs: n,
    sentences,
    entities,
    avgSentences: n ? sentences / n : 0,
    avgEntities: n ? entities / n : 0,
  };
}

export interface StatExpectation {
  paragraphs: number;
  avgSentences: number;
  avgSentencesTol: number;
  avgEntities: number;
  avgEntitiesTol: number;
}

/** Published full-release averages: ~488 paragraphs, 6.7 sentences and 4.17
 * entities per paragraph. */
export const RELEASE_EXPECTATION: StatExpectation = {
  paragraphs: 488,
  avgSentences: 6.7,
  avgSentencesTol: 0.5,
  avgEntities: 4.17,
  avgEntitiesTol: 0.3,
};

export function checkStats(stats: CorpusStats, expect: StatExpectation): string[] {
  const problems: string[] = [];
  if (stats.paragraphs !== expect.paragraphs) {
    problems.push(`paragraph count ${stats.paragraphs} != ${expect.paragraphs}`);
  }
  if (Math.abs(stats.avgSentences - expect.avgSentences) > expect.avgSentencesTol) {
    problems.push(
      `avg sentences ${stats.avgSentences.toFixed(2)} outside ` +
      `${expect.avgSentences} +/- ${expect.avgSentencesTol}`);
  }
  if (Math.abs(stats.avgEntities - expect.avgEntities) > expect.avgEntitiesTol) {
    problems.push(
      `avg entities ${stats.avgEntities.toFixed(2)} outside ` +
      `${expect.avgEntities} +/- ${expect.avgEntitiesTol}`);
  }
  return problems;
}
