/**
 * Parser for the raw grid TSV release format.
 *
 * Paragraphs are blank-line-separated blocks of tab-separated rows:
 *
 *   PARA_ID      <id>
 *   PROMPT       <topic sentence>
 *   PARTICIPANTS <entity 1>  <entity 2> ...
 *   state0       <loc 1>     <loc 2> ...
 *   event1       <sentence 1 text>
 *   state1       <loc 1>     <loc 2> ...
 *   ...
 *   stateT       ...
 *
 * "-" marks non-existence and "?" an unknown location. Participant cells may
 * hold several surface variants separated by ";". Malformed blocks are
 * skipped and reported; the caller enforces the skip-rate budget.
 */

import { ParseReport, RawParagraph } from './types';

function splitBlocks(text: string): string[][] {
  const blocks: string[][] = [];
  let current: string[] = [];
  for (const raw of text.split(/\r?\n/)) {
    if (raw.trim() === '') {
      if (current.length > 0) {
        blocks.push(current);
        current = [];
      }
      continue;
    }
    current.push(raw);
  }
  if (current.length > 0) blocks.push(current);
  return blocks;
}

function parseBlock(lines: string[]): RawParagraph {
  const rows = new Map<string, string[]>();
  const states: string[][] = [];
  const events: string[] = [];
  for (const line of lines) {
    const cells = line.split('\t').map((c) => c.trim());
    const key = cells[0];
    if (/^state\d+$/.test(key)) {
      const n = Number(key.slice(5));
      if (n !== states.length) throw new Error(`state rows out of order at ${key}`);
      states.push(cells.slice(1));
    } else if (/^event\d+$/.test(key)) {
      const n = Number(key.slice(5));
      if (n !== events.length + 1) throw new Error(`event rows out of order at ${key}`);
      events.push(cells.slice(1).join(' ').trim());
    } else {
      rows.set(key, cells.slice(1));
    }
  }
  const id = (rows.get('PARA_ID') ?? [])[0];
  if (!id) throw new Error('missing PARA_ID row');
  const participants = (rows.get('PARTICIPANTS') ?? []).filter((p) => p !== '');
  if (participants.length === 0) throw new Error('missing or empty PARTICIPANTS row');
  if (events.length === 0) throw new Error('no event rows');
  if (events.some((e) => e === '')) throw new Error('empty event sentence');
  if (states.length !== events.length + 1) {
    throw new Error(`expected ${events.length + 1} state rows, got ${states.length}`);
  }
  for (const [i, state] of states.entries()) {
    if (state.length !== participants.length) {
      throw new Error(
        `state${i} has ${state.length} cells for ${participants.length} participants`);
    }
    if (state.some((c) => c === '')) throw new Error(`state${i} has an empty cell`);
  }
  // transpose to grid[participant][step]
  const grid = participants.map((_, p) => states.map((row) => row[p]));
  return {
    id,
    prompt: (rows.get('PROMPT') ?? []).join(' '),
    participants,
    sentences: events,
    grid,
  };
}

export function parseRawGrids(text: string): ParseReport {
  const report: ParseReport = { paragraphs: [], skipped: [], totalBlocks: 0 };
  for (const block of splitBlocks(text)) {
    report.totalBlocks += 1;
    try {
      report.paragraphs.push(parseBlock(block));
    } catch (err) {
      const idGuess = block[0]?.split('\t')[1] ?? `block ${report.totalBlocks}`;
      report.skipped.push([idGuess, (err as Error).message]);
    }
  }
  return report;
}

export function splitAliases(cell: string): string[] {
  return cell
    .split(';')
    .map((a) => a.trim())
    .filter((a) => a !== '');
}
