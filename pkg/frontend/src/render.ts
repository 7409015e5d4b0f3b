// Canvas rendering: side-view skeleton with contact markers, a top-down
// heading dial, speed gauge, and reward readouts. The camera follows the
// torso horizontally.

import { StateFrame } from "./protocol";
import { ViewState } from "./state";

const SCALE = 220; // px per meter
const GROUND_COLOR = "#4a4036";
const BODY_COLOR = "#58a6ff";
const CONTACT_COLOR = "#ffd23f";
const BOX_COLOR = "#d95d39";
const TRAIL_COLOR = "rgba(88, 166, 255, 0.35)";

export function renderFrame(ctx: CanvasRenderingContext2D, view: ViewState,
                            nowMs: number): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = "#14181d";
  ctx.fillRect(0, 0, width, height);
  const frame = view.latest;
  if (!frame) {
    ctx.fillStyle = "#9aa4af";
    ctx.font = "16px system-ui";
    ctx.fillText(`status: ${view.status}...`, 20, 30);
    return;
  }
  const torso = frame.links[0];
  const camX = torso.x;
  const groundY = height * 0.78;
  const toPx = (x: number, y: number): [number, number] => [
    width * 0.45 + (x - camX) * SCALE,
    groundY - y * SCALE,
  ];

  // ground with friction-dependent hatching
  ctx.fillStyle = GROUND_COLOR;
  ctx.fillRect(0, groundY, width, height - groundY);
  const slippery = frame.ground_friction < 0.2;
  ctx.strokeStyle = slippery ? "#7fd0ff" : "#2c261f";
  ctx.lineWidth = 1;
  const offset = (camX * SCALE) % 24;
  for (let px = -24; px < width + 24; px += 24) {
    ctx.beginPath();
    ctx.moveTo(px - offset, groundY);
    ctx.lineTo(px - offset - 10, groundY + 12);
    ctx.stroke();
  }

  // COM trail
  ctx.strokeStyle = TRAIL_COLOR;
  ctx.lineWidth = 2;
  ctx.beginPath();
  view.comTrail().forEach(([x, y], i) => {
    const [px, py] = toPx(x, y);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();

  drawSkeleton(ctx, frame, view, toPx);

  // thrown boxes
  for (const box of frame.boxes) {
    const [px, py] = toPx(box.x, box.y);
    ctx.save();
    ctx.translate(px, py);
    ctx.rotate(-box.angle);
    ctx.fillStyle = BOX_COLOR;
    ctx.fillRect(-box.hw * SCALE, -box.hh * SCALE, 2 * box.hw * SCALE,
                 2 * box.hh * SCALE);
    ctx.restore();
  }

  drawHeadingDial(ctx, frame, width - 90, 90);
  drawGauges(ctx, frame, view, nowMs);
}

function drawSkeleton(ctx: CanvasRenderingContext2D, frame: StateFrame,
                      view: ViewState,
                      toPx: (x: number, y: number) => [number, number]): void {
  const model = view.model;
  const upperLen = model ? model.upper_len : 0.25;
  const lowerLen = model ? model.lower_len : 0.25;
  const torsoHalf = model ? model.torso_half_core + model.torso_radius : 0.3;

  ctx.strokeStyle = BODY_COLOR;
  ctx.lineCap = "round";

  const torso = frame.links[0];
  const [tx, ty] = toPx(torso.x, torso.y);
  ctx.lineWidth = 14;
  ctx.beginPath();
  ctx.moveTo(tx - Math.cos(torso.angle) * torsoHalf * SCALE,
             ty + Math.sin(torso.angle) * torsoHalf * SCALE);
  ctx.lineTo(tx + Math.cos(torso.angle) * torsoHalf * SCALE,
             ty - Math.sin(torso.angle) * torsoHalf * SCALE);
  ctx.stroke();

  ctx.lineWidth = 5;
  for (let leg = 0; leg < 4; leg += 1) {
    const upper = frame.links[1 + 2 * leg];
    const lower = frame.links[2 + 2 * leg];
    if (!upper || !lower) continue;
    const segment = (link: { x: number; y: number; angle: number },
                     len: number) => {
      const hx = link.x - (len / 2) * Math.sin(link.angle);
      const hy = link.y + (len / 2) * Math.cos(link.angle);
      const fx = link.x + (len / 2) * Math.sin(link.angle);
      const fy = link.y - (len / 2) * Math.cos(link.angle);
      const [ax, ay] = toPx(hx, hy);
      const [bx, by] = toPx(fx, fy);
      ctx.beginPath();
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.stroke();
    };
    ctx.strokeStyle = leg < 2 ? BODY_COLOR : "#3f7fc4";
    segment(upper, upperLen);
    segment(lower, lowerLen);
    if (frame.contacts[leg]) {
      const footX = lower.x + (lowerLen / 2) * Math.sin(lower.angle);
      const footY = lower.y - (lowerLen / 2) * Math.cos(lower.angle);
      const [fx, fy] = toPx(footX, footY);
      ctx.fillStyle = CONTACT_COLOR;
      ctx.beginPath();
      ctx.arc(fx, fy, 6, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

function drawHeadingDial(ctx: CanvasRenderingContext2D, frame: StateFrame,
                         cx: number, cy: number): void {
  const r = 46;
  ctx.strokeStyle = "#9aa4af";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(cx, cy, r, 0, 2 * Math.PI);
  ctx.stroke();
  // heading vector (cos, -sin): screen-up is -y, yaw>0 turns counter-clockwise
  const hx = Math.cos(frame.yaw);
  const hy = -Math.sin(frame.yaw);
  ctx.strokeStyle = CONTACT_COLOR;
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(cx + hx * r * 0.85, cy - hy * r * 0.85);
  ctx.stroke();
  // commanded offset
  const target = frame.yaw + frame.active_command[1];
  ctx.strokeStyle = "#6fdc8c";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(cx + Math.cos(target) * r * 0.85,
             cy - -Math.sin(target) * r * 0.85);
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.fillStyle = "#9aa4af";
  ctx.font = "11px system-ui";
  ctx.fillText("heading", cx - 22, cy + r + 14);
}

function drawGauges(ctx: CanvasRenderingContext2D, frame: StateFrame,
                    view: ViewState, nowMs: number): void {
  ctx.fillStyle = "#dfe6ee";
  ctx.font = "13px ui-monospace, monospace";
  const lines = [
    `speed ${frame.com_speed.toFixed(2)} m/s  (target ${frame.active_command[0].toFixed(2)})`,
    `heading offset ${frame.active_command[1].toFixed(2)} rad`,
    `reward  speed ${frame.reward.speed.toFixed(3)}  heading ${frame.reward.heading.toFixed(3)}`,
    `friction ${frame.ground_friction.toFixed(2)}  boxes ${frame.boxes.length}`,
    `${view.fps(nowMs).toFixed(0)} fps  frames ${view.framesReceived}  dropped ${view.malformedFrames}`,
    `status ${view.status}`,
  ];
  lines.forEach((text, i) => ctx.fillText(text, 16, 24 + 18 * i));

  // speed bar: actual vs target
  const barX = 16;
  const barY = 140;
  const barW = 220;
  ctx.strokeStyle = "#9aa4af";
  ctx.strokeRect(barX, barY, barW, 10);
  ctx.fillStyle = BODY_COLOR;
  ctx.fillRect(barX, barY, Math.min(1, frame.com_speed / 4) * barW, 10);
  ctx.fillStyle = CONTACT_COLOR;
  const tx = barX + Math.min(1, frame.active_command[0] / 4) * barW;
  ctx.fillRect(tx - 1, barY - 3, 2, 16);
}
