// WebSocket session with automatic reconnect and exponential backoff.
// Network events only feed the ViewState mailbox; rendering happens on its
// own loop.

import { parseFrame, ServerFrame } from "./protocol";

export function backoffDelayMs(attempt: number, baseMs = 500,
                               capMs = 8000): number {
  return Math.min(capMs, baseMs * Math.pow(2, Math.max(0, attempt)));
}

export interface ConnectionCallbacks {
  onFrame: (frame: ServerFrame) => void;
  onMalformed: () => void;
  onStatus: (status: "connecting" | "connected" | "retrying") => void;
}

type WsFactory = (url: string) => WebSocket;

export class Connection {
  private ws: WebSocket | null = null;
  private attempt = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private cb: ConnectionCallbacks,
    private makeWs: WsFactory = (u) => new WebSocket(u),
  ) {}

  connect(): void {
    if (this.closed) return;
    this.cb.onStatus(this.attempt === 0 ? "connecting" : "retrying");
    let ws: WebSocket;
    try {
      ws = this.makeWs(this.url);
    } catch {
      this.scheduleRetry();
      return;
    }
    this.ws = ws;
    ws.onopen = () => {
      this.attempt = 0;
      this.cb.onStatus("connected");
    };
    ws.onmessage = (ev: MessageEvent) => {
      const frame = parseFrame(String(ev.data));
      if (frame === null) {
        this.cb.onMalformed();
        return;
      }
      this.cb.onFrame(frame);
    };
    ws.onclose = () => {
      this.ws = null;
      this.scheduleRetry();
    };
    ws.onerror = () => {
      // close follows; retry handled there
    };
  }

  private scheduleRetry(): void {
    if (this.closed) return;
    this.cb.onStatus("retrying");
    const delay = backoffDelayMs(this.attempt);
    this.attempt += 1;
    this.timer = setTimeout(() => this.connect(), delay);
  }

  send(text: string): boolean {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(text);
      return true;
    }
    return false;
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.ws?.close();
  }
}
