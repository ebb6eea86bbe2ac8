/**
 * Retry queue for writes that failed on the network.
 *
 * Keyed so each logical operation (one verdict per candidate, one missed
 * mark per local id) holds at most one slot — re-enqueueing replaces the
 * previous attempt instead of stacking duplicates. Flushing preserves
 * insertion order and stops at the first operation that is still
 * network-failing, leaving it and everything behind it queued.
 */

/**
 * One delivery attempt. Resolves "delivered" when the server accepted the
 * write (possibly discovering it already had it), "rejected" when the server
 * refused it for good (dropped from the queue). Throws on network failure.
 */
export type Attempt = () => Promise<"delivered" | "rejected">;

export interface FlushResult {
  delivered: string[];
  rejected: string[];
}

export class RetryQueue {
  private readonly ops = new Map<string, Attempt>();

  get size(): number {
    return this.ops.size;
  }

  has(key: string): boolean {
    return this.ops.has(key);
  }

  keys(): string[] {
    return [...this.ops.keys()];
  }

  enqueue(key: string, attempt: Attempt): void {
    this.ops.set(key, attempt);
  }

  drop(key: string): void {
    this.ops.delete(key);
  }

  async flush(): Promise<FlushResult> {
    const delivered: string[] = [];
    const rejected: string[] = [];
    for (const [key, attempt] of [...this.ops]) {
      let outcome: "delivered" | "rejected";
      try {
        outcome = await attempt();
      } catch {
        break; // still offline — keep this and all later ops queued
      }
      this.ops.delete(key);
      (outcome === "delivered" ? delivered : rejected).push(key);
    }
    return { delivered, rejected };
  }
}
