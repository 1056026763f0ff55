export interface RawParagraph {
  id: string;
  prompt: string;
  /** participant cells as released; ";" separates surface variants */
  participants: string[];
  /** sentence texts, one per step */
  sentences: string[];
  /** grid[participant][step], steps 0..T ("-" absent, "?" unknown) */
  grid: string[][];
}

export interface CanonicalToken {
  surface: string;
  pos: 'NOUN' | 'ADJ' | 'VERB' | 'OTHER';
  is_verb: boolean;
}

export interface CanonicalEntity {
  name: string;
  aliases: string[];
}

export interface CanonicalParagraph {
  id: string;
  sentences: CanonicalToken[][];
  entities: CanonicalEntity[];
  grid: string[][];
}

export interface ParseReport {
  paragraphs: RawParagraph[];
  /** block-level failures: [paragraph id or line marker, reason] */
  skipped: Array<[string, string]>;
  totalBlocks: number;
}
