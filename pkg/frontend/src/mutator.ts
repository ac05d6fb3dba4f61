// Serializes seed mutations during a drag: at most one request in flight;
// pointer moves arriving mid-flight collapse to the latest position, which
// is sent as soon as the previous response lands (trailing edge).

export type SendFn = (positionMm: number[]) => Promise<{ revision: number }>;

export interface MutationLogEntry {
  kind: 'sent' | 'applied' | 'dropped-stale' | 'error';
  revision?: number;
  detail?: string;
}

export class SeedDragQueue {
  private inFlight = false;
  private pending: number[] | null = null;
  private lastAppliedRevision = 0;
  readonly log: MutationLogEntry[] = [];
  onRevision: (revision: number) => void = () => {};
  onOffline: (offline: boolean) => void = () => {};
  private settleResolvers: (() => void)[] = [];

  constructor(private send: SendFn) {}

  get appliedRevision(): number {
    return this.lastAppliedRevision;
  }

  get busy(): boolean {
    return this.inFlight || this.pending !== null;
  }

  push(positionMm: number[]): void {
    this.pending = positionMm.slice();
    if (!this.inFlight) {
      void this.pump();
    }
  }

  private async pump(): Promise<void> {
    while (this.pending !== null) {
      const position = this.pending;
      this.pending = null;
      this.inFlight = true;
      this.log.push({ kind: 'sent' });
      try {
        const resp = await this.send(position);
        this.onOffline(false);
        if (resp.revision > this.lastAppliedRevision) {
          this.lastAppliedRevision = resp.revision;
          this.log.push({ kind: 'applied', revision: resp.revision });
          this.onRevision(resp.revision);
        } else {
          // out-of-order response: never let it overwrite a newer revision
          this.log.push({ kind: 'dropped-stale', revision: resp.revision });
        }
      } catch (err) {
        this.log.push({ kind: 'error', detail: String(err) });
        this.onOffline(true);
      }
      this.inFlight = false;
    }
    for (const resolve of this.settleResolvers.splice(0)) {
      resolve();
    }
  }

  // Resolves once no request is in flight and nothing is pending.
  settled(): Promise<void> {
    if (!this.busy) {
      return Promise.resolve();
    }
    return new Promise((resolve) => this.settleResolvers.push(resolve));
  }
}
