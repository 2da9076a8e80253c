/** Wire types for the live-session socket. The console is a pure consumer
 * and producer of these frames; it computes no physics of its own. */

export const PROTOCOL_VERSION = 1;

export interface TaxelSample {
  index: number;
  raw: number;
  force: number;
}

export interface HelloFrame {
  kind: "hello";
  protocol: number;
  dt: number;
  snapshot_rate: number;
  controller: string;
  taxels: number[];
  scenario: string;
}

export interface SnapshotFrame {
  kind: "snapshot";
  protocol: number;
  seq: number;
  t: number;
  controller: string;
  q_B: number[];
  dq_B: number[];
  q_A: number[];
  dq_A: number[];
  ee: number[];
  x_d: number[];
  taxels: TaxelSample[];
  tau_v_ext: number[];
  tau_v: number[];
  F_cmd: number[];
  F_ee_ext: number[];
}

export interface AckFrame {
  kind: "ack";
  for: string;
  id?: unknown;
}

export interface ErrorFrame {
  kind: "error";
  message: string;
  fatal?: boolean;
  id?: unknown;
}

export type ServerFrame = HelloFrame | SnapshotFrame | AckFrame | ErrorFrame;

export interface ApplyForceMessage {
  kind: "apply_force";
  target: number | "ee";
  magnitude: number;
  duration: number;
  direction?: [number, number, number];
  id?: number;
}

export interface SetControllerMessage {
  kind: "set_controller";
  controller: string;
  id?: number;
}

export interface SetGainsMessage {
  kind: "set_gains";
  gains: Record<string, unknown>;
  id?: number;
}

export type ClientMessage = ApplyForceMessage | SetControllerMessage | SetGainsMessage;

const SERVER_KINDS = new Set(["hello", "snapshot", "ack", "error"]);

/** Parse one socket frame. Throws on anything that is not a known frame,
 * so the caller can surface bad data instead of rendering from it. */
export function parseServerFrame(text: string): ServerFrame {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (exc) {
    throw new Error(`frame is not JSON: ${exc}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new Error("frame is not an object");
  }
  const kind = (doc as { kind?: unknown }).kind;
  if (typeof kind !== "string" || !SERVER_KINDS.has(kind)) {
    throw new Error(`unknown frame kind ${JSON.stringify(kind)}`);
  }
  if (kind === "snapshot") {
    const snap = doc as SnapshotFrame;
    if (!Array.isArray(snap.q_B) || !Array.isArray(snap.taxels) ||
        typeof snap.t !== "number" || typeof snap.seq !== "number") {
      throw new Error("snapshot frame is missing fields");
    }
  }
  return doc as ServerFrame;
}

/** True for a socket ready to carry a message right now. */
export interface MessagePort {
  readyState: number;
  send(text: string): void;
}

export const SOCKET_OPEN = 1; // WebSocket.OPEN, usable without a DOM global

/** Send if the socket is open; report whether the message actually left.
 * Gestures fired against a closed socket are dropped, not queued. */
export function trySend(socket: MessagePort | null, msg: ClientMessage): boolean {
  if (socket === null || socket.readyState !== SOCKET_OPEN) {
    return false;
  }
  socket.send(JSON.stringify(msg));
  return true;
}
