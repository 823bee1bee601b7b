import { ApiClient } from "./api.js";
import type { ApiReading, MeterSummary } from "./types.js";

const PAGE_SIZE = 500;
const MAX_BACKFILL_PAGES = 20;

interface SeriesCache {
  bySeq: Map<number, ApiReading>;
  lastSeq: number | null;
  /** Widest window (ms) already backfilled, so narrowing is free. */
  backfilledMs: number;
}

/**
 * Client-side state for the dashboard: the meter list, one reading series
 * per meter (deduplicated by sequence number, trimmed to the display
 * window), and a staleness flag that flips whenever a poll fails.
 *
 * Every reading held here came verbatim from an API response — the store
 * merges and trims, it never synthesizes points.
 */
export class DashboardStore {
  meters: MeterSummary[] = [];
  selectedId: string | null = null;
  windowMs = 60_000;
  stale = false;
  lastSyncMs: number | null = null;

  private cache = new Map<string, SeriesCache>();

  constructor(
    private readonly client: ApiClient,
    private readonly now: () => number = () => Date.now(),
  ) {}

  select(meterId: string): void {
    this.selectedId = meterId;
  }

  setWindow(ms: number): void {
    this.windowMs = ms;
  }

  selectedMeter(): MeterSummary | null {
    return this.meters.find((m) => m.storage_id === this.selectedId) ?? null;
  }

  /** One poll: meter list, then the selected meter's new readings. */
  async refresh(): Promise<void> {
    try {
      this.meters = await this.client.meters();
      if (this.selectedId === null && this.meters.length > 0) {
        this.selectedId = this.meters[0].storage_id;
      }
      if (this.selectedId !== null) {
        await this.pullReadings(this.selectedId);
      }
      this.stale = false;
      this.lastSyncMs = this.now();
    } catch {
      this.stale = true;
    }
  }

  /** Readings of the selected meter inside the window, oldest first. */
  readingsInWindow(): ApiReading[] {
    if (this.selectedId === null) return [];
    const cache = this.cache.get(this.selectedId);
    if (!cache) return [];
    const cutoff = this.now() - this.windowMs;
    const rows = [...cache.bySeq.values()].filter((r) => r.timestamp_ms >= cutoff);
    rows.sort((a, b) => a.timestamp_ms - b.timestamp_ms);
    return rows;
  }

  private async pullReadings(meterId: string): Promise<void> {
    let cache = this.cache.get(meterId);
    if (!cache) {
      cache = { bySeq: new Map(), lastSeq: null, backfilledMs: 0 };
      this.cache.set(meterId, cache);
    }

    if (cache.lastSeq === null || this.windowMs > cache.backfilledMs) {
      // First look at this meter, or the user widened the window: page
      // through everything inside the window from its start.
      const fromMs = this.now() - this.windowMs;
      let after: number | undefined;
      for (let page = 0; page < MAX_BACKFILL_PAGES; page++) {
        const { readings, next } = await this.client.readings(meterId, {
          fromMs,
          afterSeq: after,
          max: PAGE_SIZE,
        });
        this.absorb(cache, readings);
        if (next === null) break;
        after = next;
      }
      cache.backfilledMs = this.windowMs;
    } else {
      // Steady state: only what's new since the last poll.
      const { readings } = await this.client.readings(meterId, {
        afterSeq: cache.lastSeq,
        max: PAGE_SIZE,
      });
      this.absorb(cache, readings);
    }
    this.trim(cache);
  }

  private absorb(cache: SeriesCache, readings: ApiReading[]): void {
    for (const r of readings) {
      cache.bySeq.set(r.seq, r);
      if (cache.lastSeq === null || r.seq > cache.lastSeq) cache.lastSeq = r.seq;
    }
  }

  private trim(cache: SeriesCache): void {
    // Keep one window of slack so a widened window doesn't flicker empty.
    const cutoff = this.now() - 2 * this.windowMs;
    for (const [seq, r] of cache.bySeq) {
      if (r.timestamp_ms < cutoff) cache.bySeq.delete(seq);
    }
  }
}
