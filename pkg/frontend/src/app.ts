import { dragMagnitude, hitTest, pushGesture } from "./gesture.js";
import { parseServerFrame, trySend } from "./protocol.js";
import type { ClientMessage } from "./protocol.js";
import { drawChart, drawScene, makeViewport } from "./render.js";
import type { ChartSeries } from "./render.js";
import { computeScene } from "./scene.js";
import { SessionViewModel } from "./viewModel.js";

const RECONNECT_DELAY_MS = 1000;
const PALETTE = ["#38bdf8", "#f472b6", "#facc15", "#4ade80", "#fb923c",
                 "#a78bfa", "#f87171", "#34d399", "#e879f9", "#fbbf24", "#94a3b8"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function main(): void {
  const view = new SessionViewModel();
  const sceneCanvas = el<HTMLCanvasElement>("scene");
  const statusLine = el<HTMLElement>("status");
  const warnLine = el<HTMLElement>("warning");
  const buttons = Array.from(
    document.querySelectorAll<HTMLButtonElement>("button[data-controller]"));

  const charts: { canvas: HTMLCanvasElement; title: string; series: ChartSeries[] }[] = [
    {
      canvas: el<HTMLCanvasElement>("chart-ee"),
      title: "EE position vs desired [m]",
      series: [0, 1, 2].flatMap((axis) => [
        { label: `ee ${"xyz"[axis]}`, color: PALETTE[axis]!, buffer: view.eePos[axis]! },
        { label: `des ${"xyz"[axis]}`, color: "#64748b", buffer: view.eeDesired[axis]! },
      ]),
    },
    {
      canvas: el<HTMLCanvasElement>("chart-base"),
      title: "base pose x [m], y [m], yaw [rad]",
      series: [0, 1, 2].map((axis) => (
        { label: "xy yaw"[axis]!, color: PALETTE[axis]!, buffer: view.basePose[axis]! })),
    },
    {
      canvas: el<HTMLCanvasElement>("chart-taxels"),
      title: "taxel forces [N]",
      series: [], // filled once hello names the indices
    },
    {
      canvas: el<HTMLCanvasElement>("chart-wrench"),
      title: "base wrench tau_v_ext [N, N, N m]",
      series: [0, 1, 2].map((axis) => (
        { label: ["fx", "fy", "mz"][axis]!, color: PALETTE[axis]!,
          buffer: view.baseWrench[axis]! })),
    },
  ];

  let socket: WebSocket | null = null;
  let nextId = 1;

  function send(msg: ClientMessage): void {
    if (!trySend(socket, { ...msg, id: nextId })) {
      view.warning = "not connected: command dropped";
      return;
    }
    nextId += 1;
  }

  function connect(): void {
    const proto = location.protocol === "https:" ? "wss" : "ws";
    const ws = new WebSocket(`${proto}://${location.host}/ws`);
    socket = ws;
    statusLine.textContent = "connecting…";
    ws.onmessage = (event) => {
      try {
        const frame = parseServerFrame(String(event.data));
        view.ingest(frame, performance.now());
        if (frame.kind === "hello") {
          const taxelChart = charts[2]!;
          taxelChart.series = frame.taxels.map((index, i) => ({
            label: `t${index}`,
            color: PALETTE[i % PALETTE.length]!,
            buffer: view.taxelForce.get(index)!,
          }));
          statusLine.textContent =
            `live: ${frame.scenario}, dt ${frame.dt} s, ${frame.snapshot_rate} Hz`;
        }
      } catch (exc) {
        view.warning = String(exc);
      }
    };
    ws.onclose = () => {
      if (socket === ws) {
        socket = null;
        statusLine.textContent = "disconnected, retrying…";
        setTimeout(connect, RECONNECT_DELAY_MS);
      }
    };
  }

  sceneCanvas.addEventListener("pointerdown", (event) => {
    const scene = computeScene(view, performance.now());
    if (scene === null) {
      return;
    }
    const vp = makeViewport(sceneCanvas);
    const rect = sceneCanvas.getBoundingClientRect();
    const [wx, wy] = vp.toWorld(event.clientX - rect.left, event.clientY - rect.top);
    const target = hitTest(scene, wx, wy);
    if (target !== null) {
      view.drag = { target, start: [wx, wy], current: [wx, wy] };
      sceneCanvas.setPointerCapture(event.pointerId);
    }
  });
  sceneCanvas.addEventListener("pointermove", (event) => {
    if (view.drag === null) {
      return;
    }
    const vp = makeViewport(sceneCanvas);
    const rect = sceneCanvas.getBoundingClientRect();
    view.drag.current = vp.toWorld(event.clientX - rect.left, event.clientY - rect.top);
  });
  sceneCanvas.addEventListener("pointerup", () => {
    if (view.drag === null) {
      return;
    }
    const { target, start, current } = view.drag;
    view.drag = null;
    const msg = pushGesture(target, current[0] - start[0], current[1] - start[1]);
    if (msg !== null) {
      send(msg);
    }
  });

  for (const button of buttons) {
    button.addEventListener("click", () => {
      send({ kind: "set_controller", controller: button.dataset["controller"]! });
    });
  }

  function frame(): void {
    const now = performance.now();
    const scene = computeScene(view, now);
    drawScene(sceneCanvas, scene);
    for (const chart of charts) {
      drawChart(chart.canvas, chart.title, chart.series);
    }
    for (const button of buttons) {
      button.classList.toggle("active",
                              button.dataset["controller"] === view.controller());
    }
    if (view.drag !== null) {
      const [dx, dy] = [view.drag.current[0] - view.drag.start[0],
                        view.drag.current[1] - view.drag.start[1]];
      warnLine.textContent = `push preview: ${dragMagnitude(dx, dy).toFixed(0)} N`;
    } else {
      warnLine.textContent = view.warning ?? "";
    }
    requestAnimationFrame(frame);
  }

  connect();
  requestAnimationFrame(frame);
}

main();
