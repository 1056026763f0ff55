/**
 * Pretrained-embedding subset extraction.
 *
 * Reads the plain text vector format (one "token v1 .. vd" line per word, no
 * header), keeps only the corpus vocabulary, and writes the engine's sidecar
 * format: a "<vocab_size> <dim>" header followed by the rows. The required
 * "<unk>" row is synthesized as the mean of the selected vectors when the
 * source file has none (deterministic and documented here).
 */

export interface EmbeddingSubset {
  order: string[];
  vectors: Map<string, number[]>;
  dim: number;
  covered: number;
  missing: number;
}

export const UNK = '<unk>';

export function extractSubset(vectorText: string, vocabulary: Set<string>): EmbeddingSubset {
  const vectors = new Map<string, number[]>();
  let dim = -1;
  for (const line of vectorText.split(/\r?\n/)) {
    if (line.trim() === '') continue;
    const sp = line.indexOf(' ');
    if (sp <= 0) continue;
    const token = line.slice(0, sp);
    const lower = token.toLowerCase();
    if (!vocabulary.has(lower) && token !== UNK) continue;
    if (vectors.has(lower)) continue;
    const values = line.slice(sp + 1).trim().split(/\s+/).map(Number);
    if (values.some(Number.isNaN)) {
      throw new Error(`embedding row for ${token!} has non-numeric values`);
    }
    if (dim === -1) dim = values.length;
    if (values.length !== dim) {
      throw new Error(`embedding row for ${token} has ${values.length} values, expected ${dim}`);
    }
    vectors.set(token === UNK ? UNK : lower, values);
  }
  if (dim === -1) throw new Error('no corpus token found in the vector file');
  if (!vectors.has(UNK)) {
    const mean = new Array(dim).fill(0);
    for (const vec of vectors.values()) {
      for (let i = 0; i < dim; i++) mean[i] += vec[i];
    }
    for (let i = 0; i < dim; i++) mean[i] /= vectors.size;
    vectors.set(UNK, mean);
  }
  const order = [UNK, ...[...vectors.keys()].filter((t) => t !== UNK).sort()];
  const covered = order.length - 1;
  const missing = [...vocabulary].filter((t) => !vectors.has(t)).length;
  return { order, vectors, dim, covered, missing };
}

export function toSidecar(subset: EmbeddingSubset): string {
  const lines = [`${subset.order.length} ${subset.dim}`];
  for (const token of subset.order) {
    const vec = subset.vectors.get(token)!;
    lines.push(`${token} ${vec.map((v) => String(v)).join(' ')}`);
  }
  return lines.join('\n') + '\n';
}
