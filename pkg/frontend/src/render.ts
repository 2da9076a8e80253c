import type { ChartBuffer } from "./buffers.js";
import type { Scene } from "./scene.js";

/** World-to-canvas mapping for the top-down view. World x points up the
 * screen (robot front up), world y points left, matching a plan view. */
export interface Viewport {
  toScreen(x: number, y: number): [number, number];
  toWorld(px: number, py: number): [number, number];
  scale: number;
}

export function makeViewport(canvas: HTMLCanvasElement, span = 4.0): Viewport {
  const scale = Math.min(canvas.width, canvas.height) / span;
  const cx = canvas.width / 2;
  const cy = canvas.height / 2;
  return {
    scale,
    toScreen: (x, y) => [cx - y * scale, cy - x * scale],
    toWorld: (px, py) => [(cy - py) / scale, (cx - px) / scale],
  };
}

function heat(intensity: number): string {
  // neutral slate through amber to red at the peak threshold
  const stops: [number, number, number][] = [
    [148, 163, 184],
    [245, 158, 11],
    [220, 38, 38],
  ];
  const v = Math.max(0, Math.min(intensity, 1)) * (stops.length - 1);
  const i = Math.min(Math.floor(v), stops.length - 2);
  const f = v - i;
  const a = stops[i]!;
  const b = stops[i + 1]!;
  const mix = a.map((ai, k) => Math.round(ai + (b[k]! - ai) * f));
  return `rgb(${mix[0]}, ${mix[1]}, ${mix[2]})`;
}

export function drawScene(canvas: HTMLCanvasElement, scene: Scene | null): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    return;
  }
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#0f172a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (scene === null) {
    ctx.fillStyle = "#94a3b8";
    ctx.font = "16px system-ui";
    ctx.fillText("waiting for snapshots…", 20, 32);
    return;
  }
  const vp = makeViewport(canvas);

  // desired-trajectory ghost
  if (scene.trail.length > 1) {
    ctx.strokeStyle = "rgba(125, 211, 252, 0.35)";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    scene.trail.forEach(([x, y], i) => {
      const [px, py] = vp.toScreen(x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }

  // base polygon
  ctx.strokeStyle = "#e2e8f0";
  ctx.fillStyle = "rgba(51, 65, 85, 0.8)";
  ctx.lineWidth = 2;
  ctx.beginPath();
  scene.base.corners.forEach(([x, y], i) => {
    const [px, py] = vp.toScreen(x, y);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.closePath();
  ctx.fill();
  ctx.stroke();

  // taxel pads, colored by live force
  for (const taxel of scene.taxels) {
    const [px, py] = vp.toScreen(taxel.x, taxel.y);
    ctx.fillStyle = heat(taxel.intensity);
    ctx.beginPath();
    ctx.arc(px, py, 0.055 * vp.scale, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#0f172a";
    ctx.font = `${Math.round(0.05 * vp.scale)}px system-ui`;
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText(String(taxel.index), px, py);
  }

  // desired pose marker then end-effector marker on top
  const [dx, dy] = vp.toScreen(scene.desired.x, scene.desired.y);
  ctx.strokeStyle = "#7dd3fc";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.arc(dx, dy, 0.05 * vp.scale, 0, 2 * Math.PI);
  ctx.stroke();

  const [ex, ey] = vp.toScreen(scene.ee.x, scene.ee.y);
  ctx.fillStyle = "#38bdf8";
  ctx.beginPath();
  ctx.arc(ex, ey, 0.04 * vp.scale, 0, 2 * Math.PI);
  ctx.fill();

  // active drag arrow with the force it will command
  if (scene.drag !== null) {
    const [fx, fy] = vp.toScreen(scene.drag.fromX, scene.drag.fromY);
    const [tx, ty] = vp.toScreen(scene.drag.toX, scene.drag.toY);
    ctx.strokeStyle = "#f472b6";
    ctx.lineWidth = 2.5;
    ctx.beginPath();
    ctx.moveTo(fx, fy);
    ctx.lineTo(tx, ty);
    ctx.stroke();
    ctx.fillStyle = "#f472b6";
    ctx.font = "14px system-ui";
    ctx.textAlign = "left";
    ctx.fillText(`${scene.drag.magnitude.toFixed(0)} N on ${scene.drag.label}`,
                 tx + 8, ty - 8);
  }

  if (scene.stale) {
    ctx.fillStyle = "#f87171";
    ctx.font = "bold 16px system-ui";
    ctx.textAlign = "left";
    ctx.fillText("STALE — no snapshots for over 1 s", 20, 32);
  }
}

export interface ChartSeries {
  label: string;
  color: string;
  buffer: ChartBuffer;
}

export function drawChart(canvas: HTMLCanvasElement, title: string,
                          series: ChartSeries[]): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    return;
  }
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#1e293b";
  ctx.fillRect(0, 0, w, h);

  let tMin = Number.POSITIVE_INFINITY;
  let tMax = Number.NEGATIVE_INFINITY;
  let vMin = Number.POSITIVE_INFINITY;
  let vMax = Number.NEGATIVE_INFINITY;
  for (const s of series) {
    const ts = s.buffer.times();
    const vs = s.buffer.values();
    if (ts.length === 0) continue;
    tMin = Math.min(tMin, ts[0] as number);
    tMax = Math.max(tMax, ts[ts.length - 1] as number);
    for (const v of vs) {
      vMin = Math.min(vMin, v);
      vMax = Math.max(vMax, v);
    }
  }
  ctx.fillStyle = "#94a3b8";
  ctx.font = "12px system-ui";
  ctx.textAlign = "left";
  ctx.fillText(title, 8, 14);
  if (!Number.isFinite(tMin) || tMax <= tMin) {
    return;
  }
  if (vMax - vMin < 1e-9) {
    vMax += 0.5;
    vMin -= 0.5;
  }
  const pad = 0.08 * (vMax - vMin);
  vMax += pad;
  vMin -= pad;

  for (const s of series) {
    const ts = s.buffer.times();
    const vs = s.buffer.values();
    if (ts.length < 2) continue;
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.2;
    ctx.beginPath();
    for (let i = 0; i < ts.length; i += 1) {
      const px = ((ts[i] as number) - tMin) / (tMax - tMin) * (w - 10) + 5;
      const py = h - 6 - ((vs[i] as number) - vMin) / (vMax - vMin) * (h - 26);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    }
    ctx.stroke();
  }
}
