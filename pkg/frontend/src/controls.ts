// Input wiring: sliders for continuous control, keys for live steering.
// Arrows nudge speed/heading, B throws a box, F toggles slippery terrain
// (restoring friction goes through reset), R resets.

import { encodeCommand, encodePerturb, encodeReset } from "./protocol";
import { ViewState } from "./state";

export interface Sender {
  send(text: string): boolean;
}

export const SPEED_STEP = 0.25;
export const HEADING_STEP = 0.15;

export class Controls {
  perturbsSent = 0;

  constructor(private view: ViewState, private conn: Sender) {}

  sendCommand(): void {
    this.conn.send(encodeCommand(this.view.speedSetting,
                                 this.view.headingSetting));
  }

  setSpeed(v: number): void {
    this.view.setSpeed(v);
    this.sendCommand();
  }

  setHeading(v: number): void {
    this.view.setHeading(v);
    this.sendCommand();
  }

  throwBox(): void {
    if (this.conn.send(encodePerturb("box_throw"))) this.perturbsSent += 1;
  }

  toggleFriction(): void {
    const slippery = (this.view.latest?.ground_friction ?? 1) < 0.2;
    if (slippery) {
      this.conn.send(encodeReset());
    } else if (this.conn.send(encodePerturb("slippery"))) {
      this.perturbsSent += 1;
    }
  }

  reset(): void {
    this.conn.send(encodeReset());
    this.view.setSpeed(0);
    this.view.setHeading(0);
    this.sendCommand();
  }

  /** Returns true when the key was handled. */
  handleKey(key: string): boolean {
    switch (key) {
      case "ArrowUp":
        this.view.nudgeSpeed(SPEED_STEP);
        this.sendCommand();
        return true;
      case "ArrowDown":
        this.view.nudgeSpeed(-SPEED_STEP);
        this.sendCommand();
        return true;
      case "ArrowLeft":
        this.view.nudgeHeading(HEADING_STEP);
        this.sendCommand();
        return true;
      case "ArrowRight":
        this.view.nudgeHeading(-HEADING_STEP);
        this.sendCommand();
        return true;
      case "b":
      case "B":
        this.throwBox();
        return true;
      case "f":
      case "F":
        this.toggleFriction();
        return true;
      case "r":
      case "R":
        this.reset();
        return true;
      default:
        return false;
    }
  }
}
