// View-side state: the latest-frame mailbox that decouples network events
// from the render loop, widget values, an fps estimate, and the capped COM
// trail.

import {
  clampHeading,
  clampSpeed,
  HelloFrame,
  StateFrame,
} from "./protocol";

export type ConnectionStatus = "connecting" | "connected" | "retrying";

export const TRAIL_CAP = 600; // ~20 s of COM history at 30 Hz

export class ViewState {
  latest: StateFrame | null = null;
  model: HelloFrame["model"] | null = null;
  status: ConnectionStatus = "connecting";
  speedSetting = 0;
  headingSetting = 0;
  framesReceived = 0;
  malformedFrames = 0;
  lastError = "";
  private frameTimes: number[] = [];
  private trail: Array<[number, number]> = [];

  /** Store a parsed frame; render reads `latest`, never a partial parse. */
  acceptState(frame: StateFrame, nowMs: number): void {
    this.latest = frame;
    this.framesReceived += 1;
    this.frameTimes.push(nowMs);
    if (this.frameTimes.length > 60) this.frameTimes.shift();
    const torso = frame.links[0];
    if (torso) {
      this.trail.push([torso.x, torso.y]);
      if (this.trail.length > TRAIL_CAP) {
        // ring behavior without unbounded growth
        this.trail.splice(0, this.trail.length - TRAIL_CAP);
      }
    }
  }

  acceptHello(frame: HelloFrame): void {
    this.model = frame.model;
  }

  noteMalformed(): void {
    this.malformedFrames += 1;
  }

  setSpeed(v: number): void {
    this.speedSetting = clampSpeed(v);
  }

  nudgeSpeed(dv: number): void {
    this.setSpeed(this.speedSetting + dv);
  }

  setHeading(v: number): void {
    this.headingSetting = clampHeading(v);
  }

  nudgeHeading(dv: number): void {
    this.setHeading(this.headingSetting + dv);
  }

  fps(nowMs: number): number {
    const times = this.frameTimes.filter((t) => nowMs - t <= 2000);
    if (times.length < 2) return 0;
    const span = (times[times.length - 1] - times[0]) / 1000;
    return span > 0 ? (times.length - 1) / span : 0;
  }

  comTrail(): ReadonlyArray<[number, number]> {
    return this.trail;
  }
}
