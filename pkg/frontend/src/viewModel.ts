import { ChartBuffer } from "./buffers.js";
import type { DragTarget } from "./gesture.js";
import type { HelloFrame, ServerFrame, SnapshotFrame } from "./protocol.js";

/** Rendering counts a session stale after this long without a snapshot. */
export const STALE_AFTER_MS = 1000;

export interface DragState {
  target: DragTarget;
  start: [number, number]; // world frame, m
  current: [number, number];
}

/** Everything the console knows, all of it derived from received frames.
 * Snapshots are stored by reference and never written to. */
export class SessionViewModel {
  hello: HelloFrame | null = null;
  latest: SnapshotFrame | null = null;
  lastSnapshotAtMs = Number.NEGATIVE_INFINITY;
  drag: DragState | null = null;
  warning: string | null = null;

  readonly eePos = [new ChartBuffer(), new ChartBuffer(), new ChartBuffer()];
  readonly eeDesired = [new ChartBuffer(), new ChartBuffer(), new ChartBuffer()];
  readonly basePose = [new ChartBuffer(), new ChartBuffer(), new ChartBuffer()];
  readonly baseWrench = [new ChartBuffer(), new ChartBuffer(), new ChartBuffer()];
  readonly taxelForce = new Map<number, ChartBuffer>();

  ingest(frame: ServerFrame, nowMs: number): void {
    switch (frame.kind) {
      case "hello":
        this.hello = frame;
        for (const index of frame.taxels) {
          if (!this.taxelForce.has(index)) {
            this.taxelForce.set(index, new ChartBuffer());
          }
        }
        break;
      case "snapshot":
        this.latest = frame;
        this.lastSnapshotAtMs = nowMs;
        this.recordCharts(frame);
        break;
      case "error":
        this.warning = frame.message;
        break;
      case "ack":
        break;
    }
  }

  private recordCharts(snap: SnapshotFrame): void {
    for (let axis = 0; axis < 3; axis += 1) {
      this.eePos[axis]!.push(snap.t, snap.ee[axis] ?? 0);
      this.eeDesired[axis]!.push(snap.t, snap.x_d[axis] ?? 0);
      this.basePose[axis]!.push(snap.t, snap.q_B[axis] ?? 0);
      this.baseWrench[axis]!.push(snap.t, snap.tau_v_ext[axis] ?? 0);
    }
    for (const taxel of snap.taxels) {
      let buffer = this.taxelForce.get(taxel.index);
      if (buffer === undefined) {
        buffer = new ChartBuffer();
        this.taxelForce.set(taxel.index, buffer);
      }
      buffer.push(snap.t, taxel.force);
    }
  }

  controller(): string {
    return this.latest?.controller ?? this.hello?.controller ?? "unknown";
  }

  isStale(nowMs: number): boolean {
    return nowMs - this.lastSnapshotAtMs > STALE_AFTER_MS;
  }
}
