/** Bounded time-series buffer for the strip charts. Samples older than the
 * horizon fall off the front; a hard capacity protects against a session
 * streaming faster than expected. */

export const CHART_HORIZON_S = 30;
const MAX_SAMPLES = 4096;

export class ChartBuffer {
  private ts: number[] = [];
  private vs: number[] = [];

  constructor(
    readonly horizon: number = CHART_HORIZON_S,
    readonly capacity: number = MAX_SAMPLES,
  ) {}

  push(t: number, v: number): void {
    this.ts.push(t);
    this.vs.push(v);
    const cutoff = t - this.horizon;
    let drop = 0;
    while (drop < this.ts.length - 1 && (this.ts[drop] as number) < cutoff) {
      drop += 1;
    }
    if (this.ts.length - drop > this.capacity) {
      drop = this.ts.length - this.capacity;
    }
    if (drop > 0) {
      this.ts.splice(0, drop);
      this.vs.splice(0, drop);
    }
  }

  get length(): number {
    return this.ts.length;
  }

  times(): readonly number[] {
    return this.ts;
  }

  values(): readonly number[] {
    return this.vs;
  }

  last(): number | undefined {
    return this.vs[this.vs.length - 1];
  }
}
