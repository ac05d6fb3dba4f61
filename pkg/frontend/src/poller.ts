// Result polling loop: the UI works with polling alone. Polls fast while a
// recompute is pending, idles when settled, and never blocks input.

import type { ResultDoc } from './protocol.js';

export class ResultPoller {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private fetchResult: () => Promise<ResultDoc>,
    private onDoc: (doc: ResultDoc) => void,
    private activeIntervalMs = 120,
    private idleIntervalMs = 800,
  ) {}

  kick(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
  }

  private async tick(): Promise<void> {
    if (this.stopped) return;
    let interval = this.idleIntervalMs;
    try {
      const doc = await this.fetchResult();
      this.onDoc(doc);
      if (doc.stale) interval = this.activeIntervalMs;
    } catch {
      interval = this.idleIntervalMs;
    }
    if (!this.stopped) {
      this.timer = setTimeout(() => void this.tick(), interval);
    }
  }
}
