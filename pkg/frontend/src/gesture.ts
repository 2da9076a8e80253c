import type { ApplyForceMessage } from "./protocol.js";
import type { Scene } from "./scene.js";

/** Drag length to push magnitude. 0.5 m of drag reaches the clamp. */
export const DRAG_GAIN_N_PER_M = 200;

/** Pushes never exceed the sensing range the decode was calibrated over. */
export const MAX_PUSH_N = 100;

/** Scripted pushes from the console run this long. */
export const PUSH_SECONDS = 1.0;

export type DragTarget = { kind: "taxel"; index: number } | { kind: "ee" };

const TAXEL_HIT_RADIUS_M = 0.09;
const EE_HIT_RADIUS_M = 0.12;

/** What a pointer-down at a world-frame point grabs: the nearest taxel pad,
 * the end-effector marker, or nothing. */
export function hitTest(scene: Scene, x: number, y: number): DragTarget | null {
  const ee = scene.ee;
  if (Math.hypot(x - ee.x, y - ee.y) <= EE_HIT_RADIUS_M) {
    return { kind: "ee" };
  }
  let best: { index: number; d: number } | null = null;
  for (const taxel of scene.taxels) {
    const d = Math.hypot(x - taxel.x, y - taxel.y);
    if (d <= TAXEL_HIT_RADIUS_M && (best === null || d < best.d)) {
      best = { index: taxel.index, d };
    }
  }
  return best === null ? null : { kind: "taxel", index: best.index };
}

/** Turn a completed drag into an apply_force message, or nothing.
 *
 * Taxel pushes act along the pad's inward normal, so only the drag length
 * matters; end-effector pushes keep the drag direction as a planar vector.
 */
export function pushGesture(
  target: DragTarget | null,
  dragX: number,
  dragY: number,
  id?: number,
): ApplyForceMessage | null {
  if (target === null) {
    return null;
  }
  const length = Math.hypot(dragX, dragY);
  if (length === 0) {
    return null;
  }
  const magnitude = Math.min(DRAG_GAIN_N_PER_M * length, MAX_PUSH_N);
  if (target.kind === "taxel") {
    return {
      kind: "apply_force",
      target: target.index,
      magnitude,
      duration: PUSH_SECONDS,
      ...(id === undefined ? {} : { id }),
    };
  }
  return {
    kind: "apply_force",
    target: "ee",
    magnitude,
    duration: PUSH_SECONDS,
    direction: [dragX / length, dragY / length, 0],
    ...(id === undefined ? {} : { id }),
  };
}

/** Preview magnitude for the drag overlay, same law as the final message. */
export function dragMagnitude(dragX: number, dragY: number): number {
  return Math.min(DRAG_GAIN_N_PER_M * Math.hypot(dragX, dragY), MAX_PUSH_N);
}
