/**
 * Tokenization and coarse POS tagging via wink-pos-tagger (pinned in
 * package.json; retagging with a different version or tagger will move the
 * candidate-extraction recall downstream).
 *
 * Penn tags collapse to the four-way scheme the corpus format requires:
 * NN, NNS, NNP, NNPS map to NOUN; JJ, JJR, JJS to ADJ; the VB family to
 * VERB; everything else (pronouns included) to OTHER.
 */

import posTagger from 'wink-pos-tagger';

import { CanonicalToken } from './types';

const tagger = posTagger();

export function coarsePos(pennTag: string): CanonicalToken['pos'] {
  if (/^NN/.test(pennTag)) return 'NOUN';
  if (/^JJ/.test(pennTag)) return 'ADJ';
  if (/^VB/.test(pennTag)) return 'VERB';
  return 'OTHER';
}

export function tagSentence(sentence: string): CanonicalToken[] {
  return tagger.tagSentence(sentence).map((t: { value: string; pos: string }) => {
    const pos = coarsePos(t.pos);
    return { surface: t.value, pos, is_verb: pos === 'VERB' };
  });
}

export function tokenizeOnly(sentence: string): string[] {
  return tagSentence(sentence).map((t) => t.surface);
}
