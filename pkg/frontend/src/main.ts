import { Connection } from "./connection";
import { Controls } from "./controls";
import { renderFrame } from "./render";
import { ViewState } from "./state";

const params = new URLSearchParams(location.search);
const wsUrl = params.get("ws")
  ?? `ws://${location.hostname || "127.0.0.1"}:8766`;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const view = new ViewState();

const conn = new Connection(wsUrl, {
  onFrame: (frame) => {
    if (frame.type === "state") view.acceptState(frame, performance.now());
    else if (frame.type === "hello") view.acceptHello(frame);
    else view.lastError = frame.message;
  },
  onMalformed: () => view.noteMalformed(),
  onStatus: (status) => {
    view.status = status;
    statusEl.textContent = status;
  },
});
const controls = new Controls(view, conn);

const statusEl = document.getElementById("status")!;
const speedSlider = document.getElementById("speed") as HTMLInputElement;
const headingSlider = document.getElementById("heading") as HTMLInputElement;
const speedLabel = document.getElementById("speed-label")!;
const headingLabel = document.getElementById("heading-label")!;

function syncLabels(): void {
  speedSlider.value = String(view.speedSetting);
  headingSlider.value = String(view.headingSetting);
  speedLabel.textContent = `${view.speedSetting.toFixed(2)} m/s`;
  headingLabel.textContent = `${view.headingSetting.toFixed(2)} rad`;
}

speedSlider.addEventListener("input", () => {
  controls.setSpeed(parseFloat(speedSlider.value));
  syncLabels();
});
headingSlider.addEventListener("input", () => {
  controls.setHeading(parseFloat(headingSlider.value));
  syncLabels();
});
document.getElementById("throw-box")!.addEventListener("click", () => {
  controls.throwBox();
});
document.getElementById("slippery")!.addEventListener("click", () => {
  controls.toggleFriction();
});
document.getElementById("reset")!.addEventListener("click", () => {
  controls.reset();
  syncLabels();
});
window.addEventListener("keydown", (ev) => {
  if (ev.target instanceof HTMLInputElement) return;
  if (controls.handleKey(ev.key)) {
    ev.preventDefault();
    syncLabels();
  }
});

conn.connect();

function loop(): void {
  renderFrame(ctx, view, performance.now());
  requestAnimationFrame(loop);
}
requestAnimationFrame(loop);
syncLabels();
