import { dragMagnitude } from "./gesture.js";
import { FOOTPRINT_LENGTH, FOOTPRINT_WIDTH, TAXEL_RING } from "./layout.js";
import type { SessionViewModel } from "./viewModel.js";

/** Taxel color saturates here; the collision study's safe-contact bound. */
export const PEAK_COLOR_FORCE_N = 25;

export interface TaxelGlyph {
  index: number;
  x: number; // world frame, m
  y: number;
  normal: number; // world heading of the push direction
  force: number;
  intensity: number; // 0 neutral .. 1 peak color
}

export interface DragGlyph {
  fromX: number;
  fromY: number;
  toX: number;
  toY: number;
  magnitude: number;
  label: string;
}

export interface Scene {
  base: {
    x: number;
    y: number;
    yaw: number;
    corners: [number, number][]; // world frame, CCW
  };
  taxels: TaxelGlyph[];
  ee: { x: number; y: number; z: number };
  desired: { x: number; y: number; z: number };
  trail: [number, number][]; // recent desired positions, oldest first
  drag: DragGlyph | null;
  controller: string;
  stale: boolean;
  warning: string | null;
  t: number;
}

function rot(x: number, y: number, yaw: number): [number, number] {
  const c = Math.cos(yaw);
  const s = Math.sin(yaw);
  return [c * x - s * y, s * x + c * y];
}

/** Pure scene layout from the latest snapshot. Reads the view model, never
 * writes it; feeding the same frames always yields the same scene. */
export function computeScene(view: SessionViewModel, nowMs: number): Scene | null {
  const snap = view.latest;
  if (snap === null) {
    return null;
  }
  const bx = snap.q_B[0] ?? 0;
  const by = snap.q_B[1] ?? 0;
  const yaw = snap.q_B[2] ?? 0;

  const hl = FOOTPRINT_LENGTH / 2;
  const hw = FOOTPRINT_WIDTH / 2;
  const corners: [number, number][] = (
    [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]] as [number, number][]
  ).map(([cx, cy]) => {
    const [wx, wy] = rot(cx, cy, yaw);
    return [bx + wx, by + wy] as [number, number];
  });

  const forceByIndex = new Map<number, number>();
  for (const taxel of snap.taxels) {
    forceByIndex.set(taxel.index, taxel.force);
  }
  const taxels: TaxelGlyph[] = TAXEL_RING.map((pad) => {
    const [wx, wy] = rot(pad.x, pad.y, yaw);
    const force = forceByIndex.get(pad.index) ?? 0;
    return {
      index: pad.index,
      x: bx + wx,
      y: by + wy,
      normal: yaw + pad.phi,
      force,
      intensity: Math.min(force / PEAK_COLOR_FORCE_N, 1),
    };
  });

  const trail: [number, number][] = [];
  const desX = view.eeDesired[0]!.values();
  const desY = view.eeDesired[1]!.values();
  for (let i = 0; i < desX.length; i += 1) {
    trail.push([desX[i] as number, desY[i] as number]);
  }

  let drag: DragGlyph | null = null;
  if (view.drag !== null) {
    const d = view.drag;
    const dx = d.current[0] - d.start[0];
    const dy = d.current[1] - d.start[1];
    const magnitude = dragMagnitude(dx, dy);
    drag = {
      fromX: d.start[0],
      fromY: d.start[1],
      toX: d.current[0],
      toY: d.current[1],
      magnitude,
      label: d.target.kind === "ee" ? "ee" : `taxel ${d.target.index}`,
    };
  }

  return {
    base: { x: bx, y: by, yaw, corners },
    taxels,
    ee: { x: snap.ee[0] ?? 0, y: snap.ee[1] ?? 0, z: snap.ee[2] ?? 0 },
    desired: { x: snap.x_d[0] ?? 0, y: snap.x_d[1] ?? 0, z: snap.x_d[2] ?? 0 },
    trail,
    drag,
    controller: snap.controller,
    stale: view.isStale(nowMs),
    warning: view.warning,
    t: snap.t,
  };
}
