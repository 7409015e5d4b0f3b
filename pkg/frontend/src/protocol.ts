// Wire protocol shared with the simulation server: JSON text frames over
// WebSocket. Unknown fields in server frames are ignored; frames that fail
// validation are counted and dropped by the caller.

export interface LinkPose {
  x: number;
  y: number;
  angle: number;
}

export interface BoxPose {
  x: number;
  y: number;
  angle: number;
  hw: number;
  hh: number;
}

export interface StateFrame {
  type: "state";
  t: number;
  links: LinkPose[];
  contacts: boolean[];
  yaw: number;
  com_speed: number;
  active_command: [number, number];
  reward: { speed: number; heading: number };
  boxes: BoxPose[];
  ground_friction: number;
}

export interface HelloFrame {
  type: "hello";
  model: {
    torso_half_core: number;
    torso_radius: number;
    upper_len: number;
    lower_len: number;
    leg_radius: number;
    standing_height: number;
    hip_x: number;
  };
  control_hz: number;
}

export interface ErrorFrame {
  type: "error";
  message: string;
}

export type ServerFrame = StateFrame | HelloFrame | ErrorFrame;

export const SPEED_MIN = 0;
export const SPEED_MAX = 4;
export const HEADING_MIN = -Math.PI;
export const HEADING_MAX = Math.PI;

export function clampSpeed(v: number): number {
  if (!Number.isFinite(v)) return 0;
  return Math.min(SPEED_MAX, Math.max(SPEED_MIN, v));
}

export function clampHeading(v: number): number {
  if (!Number.isFinite(v)) return 0;
  return Math.min(HEADING_MAX, Math.max(HEADING_MIN, v));
}

function isNum(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

/** Parse one server frame; returns null for anything malformed. */
export function parseFrame(raw: string): ServerFrame | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const obj = data as Record<string, unknown>;
  if (obj.type === "hello") {
    return obj as unknown as HelloFrame;
  }
  if (obj.type === "error") {
    return typeof obj.message === "string" ? (obj as unknown as ErrorFrame) : null;
  }
  if (obj.type !== "state") return null;
  if (!Array.isArray(obj.links) || !Array.isArray(obj.contacts)) return null;
  if (!isNum(obj.t) || !isNum(obj.yaw) || !isNum(obj.com_speed)) return null;
  const cmd = obj.active_command;
  if (!Array.isArray(cmd) || cmd.length !== 2 || !isNum(cmd[0]) || !isNum(cmd[1])) {
    return null;
  }
  const reward = obj.reward as Record<string, unknown> | undefined;
  if (!reward || !isNum(reward.speed) || !isNum(reward.heading)) return null;
  for (const link of obj.links) {
    const l = link as Record<string, unknown>;
    if (!isNum(l.x) || !isNum(l.y) || !isNum(l.angle)) return null;
  }
  if (!Array.isArray(obj.boxes)) (obj as Record<string, unknown>).boxes = [];
  if (!isNum(obj.ground_friction)) {
    (obj as Record<string, unknown>).ground_friction = NaN;
  }
  return obj as unknown as StateFrame;
}

export function encodeCommand(speed: number, headingDelta: number): string {
  return JSON.stringify({
    type: "command",
    speed: clampSpeed(speed),
    heading_delta: clampHeading(headingDelta),
  });
}

export function encodePerturb(kind: "box_throw" | "slippery"): string {
  return JSON.stringify({ type: "perturb", kind });
}

export function encodeReset(): string {
  return JSON.stringify({ type: "reset" });
}
