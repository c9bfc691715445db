/**
 * Token grid model and the shared token text format.
 *
 * A score is N measures x 24 tick cells. Each cell holds a pitch token
 * ("F#4"), the rest token, or the hold token "__" meaning the previous
 * note is still sounding. The text format is one measure per line, 24
 * whitespace-separated tokens; "#"-prefixed lines are comments.
 */

export const TICKS_PER_MEASURE = 24;
export const HOLD = "__";
export const REST = "rest";

export type Measure = string[];
export type Score = Measure[];

const TOKEN_PATTERN = /^(__|rest|[A-G](?:#{1,2}|b{1,2})?-?\d+)$/;

export function isValidToken(token: string): boolean {
  return TOKEN_PATTERN.test(token);
}

export function cloneScore(score: Score): Score {
  return score.map((m) => [...m]);
}

export function emptyScore(measures: number): Score {
  const score: Score = [];
  for (let i = 0; i < measures; i++) {
    const m = new Array<string>(TICKS_PER_MEASURE).fill(HOLD);
    m[0] = REST;
    score.push(m);
  }
  return score;
}

export function exportTokenText(score: Score): string {
  return score.map((m) => m.join(" ")).join("\n") + (score.length ? "\n" : "");
}

export function importTokenText(text: string): Score {
  const score: Score = [];
  const lines = text.split(/\r?\n/);
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line || line.startsWith("#")) continue;
    const tokens = line.split(/\s+/);
    if (tokens.length !== TICKS_PER_MEASURE) {
      throw new Error(`line ${i + 1}: expected ${TICKS_PER_MEASURE} tokens, got ${tokens.length}`);
    }
    for (const t of tokens) {
      if (!isValidToken(t)) throw new Error(`line ${i + 1}: bad token ${JSON.stringify(t)}`);
    }
    score.push(tokens);
  }
  return score;
}

export function scoresEqual(a: Score, b: Score): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    for (let t = 0; t < TICKS_PER_MEASURE; t++) {
      if (a[i][t] !== b[i][t]) return false;
    }
  }
  return true;
}
