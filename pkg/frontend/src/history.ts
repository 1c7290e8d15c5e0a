/**
 * Append-only record of every completed run in a session.
 *
 * Entries keep the exact request bytes (masks, ratios) plus the result, so
 * replaying an entry means re-posting identical bytes; the service is
 * deterministic, so the replayed result must match the stored one.
 */

export interface HistoryEntry {
  label: string;
  fgMaskPng: Uint8Array<ArrayBuffer>;
  guideMaskPng: Uint8Array<ArrayBuffer> | null;
  ratios: { r1: number; r2: number } | null;
  resultPng: Uint8Array<ArrayBuffer>;
  latencyMs: number;
}

export class SessionHistory {
  private readonly entries: HistoryEntry[] = [];

  push(entry: HistoryEntry): number {
    this.entries.push(entry);
    return this.entries.length - 1;
  }

  get(index: number): HistoryEntry {
    const e = this.entries[index];
    if (!e) throw new Error(`no history entry ${index}`);
    return e;
  }

  get length(): number {
    return this.entries.length;
  }

  all(): readonly HistoryEntry[] {
    return this.entries;
  }
}
