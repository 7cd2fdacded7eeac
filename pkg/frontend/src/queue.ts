// Offline vote queue: submissions that could not reach the service wait in
// localStorage and are flushed on reconnect. One slot per task_id, so a
// double-click or an impatient retry can never produce two queued votes for
// the same task; the server's idempotent store is the second line of defense.

import { ApiError, VoteSubmission } from "./api.js";

const QUEUE_KEY = "pref-arena/pending-votes/v1";

export interface QueuedVote extends VoteSubmission {
  enqueued_at: string;
  attempts: number;
}

// localStorage-compatible so tests can hand in a plain in-memory map
export interface KvStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export type FlushResult = {
  sent: number;
  dropped: number; // rejected for good (conflict, expired lease, unknown task)
  kept: number; // still unreachable, retried next flush
};

export class VoteQueue {
  constructor(
    private store: KvStore,
    private key: string = QUEUE_KEY,
  ) {}

  all(): QueuedVote[] {
    const raw = this.store.getItem(this.key);
    if (!raw) return [];
    try {
      return JSON.parse(raw) as QueuedVote[];
    } catch {
      return [];
    }
  }

  size(): number {
    return this.all().length;
  }

  private write(items: QueuedVote[]): void {
    this.store.setItem(this.key, JSON.stringify(items));
  }

  /** Queue a vote, replacing any earlier queued vote for the same task. */
  enqueue(vote: VoteSubmission): void {
    const items = this.all();
    const queued: QueuedVote = {
      ...vote,
      enqueued_at: new Date().toISOString(),
      attempts: 0,
    };
    const idx = items.findIndex((item) => item.task_id === vote.task_id);
    if (idx >= 0) {
      queued.enqueued_at = items[idx]!.enqueued_at;
      items[idx] = queued;
    } else {
      items.push(queued);
    }
    this.write(items);
  }

  /**
   * Try to deliver every queued vote. A delivered or permanently rejected
   * vote leaves the queue; only network-level failures stay for the next
   * attempt. Safe to call repeatedly.
   */
  async flush(send: (vote: VoteSubmission) => Promise<void>): Promise<FlushResult> {
    const items = this.all();
    const result: FlushResult = { sent: 0, dropped: 0, kept: 0 };
    const keep: QueuedVote[] = [];
    for (const item of items) {
      try {
        await send(item);
        result.sent += 1;
      } catch (error) {
        if (error instanceof ApiError && error.status < 500) {
          // the server answered: this vote will never succeed as-is
          result.dropped += 1;
        } else if (error instanceof ApiError) {
          // 5xx is the server's problem, not the vote's; retry later
          keep.push({ ...item, attempts: item.attempts + 1 });
          result.kept += 1;
        } else {
          keep.push({ ...item, attempts: item.attempts + 1 });
          result.kept += 1;
        }
      }
    }
    this.write(keep);
    return result;
  }
}
