"""Streaming simulation server for live steering.

One wall-clock 30 Hz simulation loop drives the policy; clients connect
over plain TCP (newline-delimited JSON frames) or WebSocket (the same
frames, text messages). Incoming commands land in an inbox and are applied
atomically at the next control tick; state frames fan out through
per-client queues that drop frames for slow consumers instead of stalling
the loop.

Client -> server messages:
    {"type": "command", "speed": f, "heading_delta": f}
    {"type": "perturb", "kind": "box_throw" | "slippery"}
    {"type": "reset"}
Unknown fields are ignored; unknown types get an error frame back on the
same connection, which stays open.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import queue
import socket
import struct
import threading
import time

import numpy as np

from .model import QuadrupedConfig
from .nets import load_checkpoint
from .physics import Box, wrap_angle
from .policy import CompositePolicy
from .quadruped import EpisodeConfig, QuadrupedEnv
from .rewards import r_heading, r_speed
from .training.imitate import net_to_scales
from .training.rollout import HighLevelFeaturizer

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
SPEED_BOUNDS = (0.0, 4.0)


class _Client:
    _ids = 0

    def __init__(self, conn: socket.socket, kind: str):
        _Client._ids += 1
        self.cid = _Client._ids
        self.conn = conn
        self.kind = kind  # "tcp" | "ws"
        self.outbox: queue.Queue = queue.Queue(maxsize=8)
        self.alive = True

    def enqueue(self, text: str) -> None:
        try:
            self.outbox.put_nowait(text)
        except queue.Full:
            pass  # slow client: drop this frame for them only


class SimServer:
    def __init__(self, checkpoint_path: str, port: int = 8765,
                 ws_port: int | None = 8766, seed: int = 0,
                 model_cfg: QuadrupedConfig | None = None,
                 ground_friction: float = 0.8, realtime: bool = True):
        meta, nets = load_checkpoint(checkpoint_path)
        for required in ("gating_high", "primitive", "obs_norm"):
            if required not in nets:
                raise ValueError(
                    f"checkpoint lacks net {required!r}; serve requires a "
                    f"fine-tuned (high-level) checkpoint")
        self.meta = meta
        gating = nets["gating_high"]
        primitive = nets["primitive"]
        k = gating.output_dim
        self.policy = CompositePolicy(gating, primitive, k=k,
                                      action_dim=primitive.output_dim // k)
        self.scales = net_to_scales(nets["obs_norm"])
        self.feat = HighLevelFeaturizer(self.scales)
        self.model_cfg = model_cfg or QuadrupedConfig()
        self.env = QuadrupedEnv(self.model_cfg, EpisodeConfig(),
                                ground_friction=ground_friction)
        self.env.reset_standing()
        self.rng = np.random.default_rng(seed)
        self.port = port
        self.ws_port = ws_port
        self.realtime = realtime
        self.speed_cmd = 0.0
        self.theta_hat = 0.0
        self.inbox: queue.Queue = queue.Queue()
        self.clients: list[_Client] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self.tick = 0
        self.command_log: list = []  # (tick, message) for replayability
        self._threads: list[threading.Thread] = []
        self._sockets: list[socket.socket] = []

    # -- lifecycle --------------------------------------------------------

    def start(self) -> None:
        tcp = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        tcp.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        tcp.bind(("127.0.0.1", self.port))  # raises immediately if busy
        tcp.listen(8)
        self._sockets.append(tcp)
        self._spawn(self._accept_loop, tcp, "tcp")
        if self.ws_port is not None:
            ws = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            ws.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            ws.bind(("127.0.0.1", self.ws_port))
            ws.listen(8)
            self._sockets.append(ws)
            self._spawn(self._accept_loop, ws, "ws")
        self._spawn(self._sim_loop)

    def stop(self) -> None:
        self._stop.set()
        for s in self._sockets:
            # shutdown wakes any thread blocked in accept(); close alone
            # leaves it blocked on a recycled descriptor
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                s.close()
            except OSError:
                pass
        with self._lock:
            clients = list(self.clients)
        for c in clients:
            c.alive = False
            try:
                c.conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                c.conn.close()
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=2.0)

    def _spawn(self, fn, *args) -> None:
        t = threading.Thread(target=fn, args=args, daemon=True)
        t.start()
        self._threads.append(t)

    # -- simulation loop ----------------------------------------------------

    def _sim_loop(self) -> None:
        dt = 1.0 / self.env.episode.control_hz
        next_tick = time.monotonic()
        while not self._stop.is_set():
            self._drain_inbox()
            self._advance()
            frame = json.dumps(self._state_frame())
            with self._lock:
                for c in self.clients:
                    c.enqueue(frame)
            self.tick += 1
            if self.realtime:
                next_tick += dt
                delay = next_tick - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_tick = time.monotonic()  # fell behind; don't burst

    def _drain_inbox(self) -> None:
        while True:
            try:
                client, msg = self.inbox.get_nowait()
            except queue.Empty:
                return
            self._apply_message(client, msg)

    def _apply_message(self, client: _Client | None, msg: dict) -> None:
        mtype = msg.get("type")
        if mtype == "command":
            try:
                speed = float(msg["speed"])
                delta = float(msg["heading_delta"])
            except (KeyError, TypeError, ValueError):
                self._error_to(client, "command needs numeric speed and heading_delta")
                return
            self.speed_cmd = min(max(speed, SPEED_BOUNDS[0]), SPEED_BOUNDS[1])
            delta = min(max(delta, -math.pi), math.pi)
            self.theta_hat = self.env.yaw + delta
            self.command_log.append((self.tick, dict(msg)))
        elif mtype == "perturb":
            kind = msg.get("kind")
            if kind not in ("box_throw", "slippery"):
                self._error_to(client, f"unknown perturb kind {kind!r}")
                return
            self.env.perturb(kind, self.rng)
            self.command_log.append((self.tick, dict(msg)))
        elif mtype == "reset":
            self.env.world.set_ground_friction(self.env.base_ground_friction)
            self.env.reset_standing()
            self.speed_cmd = 0.0
            self.theta_hat = 0.0
            self.command_log.append((self.tick, dict(msg)))
        else:
            self._error_to(client, f"unknown message type {mtype!r}")

    def _error_to(self, client: _Client | None, message: str) -> None:
        if client is not None and client.alive:
            client.enqueue(json.dumps({"type": "error", "message": message}))

    def _advance(self) -> None:
        state = self.env.observe()
        sf = self.feat.state_feat(state)
        err = wrap_angle(self.theta_hat - state.heading)
        xg = self.feat.xg(sf, self.speed_cmd, err)
        action = self.policy.mean_action(xg, sf)
        try:
            self.env.apply_action(action)
        except Exception:
            self.env.world.set_ground_friction(self.env.base_ground_friction)
            self.env.reset_standing()

    def _state_frame(self) -> dict:
        env = self.env
        state = env.observe()
        err = wrap_angle(self.theta_hat - state.heading)
        links = []
        for i in env.link_ids:
            b = env.world.bodies[i]
            links.append({"x": b.x, "y": b.y, "angle": b.angle})
        boxes = []
        for b in env.world.bodies[env.agent_body_count:]:
            if isinstance(b.shape, Box):
                boxes.append({"x": b.x, "y": b.y, "angle": b.angle,
                              "hw": b.shape.hw, "hh": b.shape.hh})
        return {
            "type": "state",
            "t": self.tick / env.episode.control_hz,
            "links": links,
            "contacts": [bool(c) for c in state.contacts],
            "yaw": state.heading,
            "com_speed": float(np.linalg.norm(state.com_vel[:2])),
            "active_command": [self.speed_cmd, err],
            "reward": {
                "speed": r_speed(self.speed_cmd, state.com_vel),
                "heading": r_heading(self.theta_hat, state.com_vel),
            },
            "boxes": boxes,
            "ground_friction": env.world.ground_friction,
        }

    def _hello_frame(self) -> str:
        cfg = self.model_cfg
        return json.dumps({
            "type": "hello",
            "model": {
                "torso_half_core": cfg.torso_half_core,
                "torso_radius": cfg.torso_radius,
                "upper_len": cfg.upper_len,
                "lower_len": cfg.lower_len,
                "leg_radius": cfg.leg_radius,
                "standing_height": cfg.standing_height,
                "hip_x": cfg.hip_x,
            },
            "control_hz": self.env.episode.control_hz,
            "stage": self.meta.get("stage"),
        })

    # -- connections ----------------------------------------------------------

    def _accept_loop(self, server_sock: socket.socket, kind: str) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = server_sock.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            client = _Client(conn, kind)
            if kind == "ws":
                try:
                    _ws_handshake(conn)
                except (OSError, ValueError):
                    conn.close()
                    continue
            with self._lock:
                self.clients.append(client)
            client.enqueue(self._hello_frame())
            self._spawn(self._writer_loop, client)
            self._spawn(self._reader_loop, client)

    def _writer_loop(self, client: _Client) -> None:
        while client.alive and not self._stop.is_set():
            try:
                text = client.outbox.get(timeout=0.25)
            except queue.Empty:
                continue
            try:
                if client.kind == "tcp":
                    client.conn.sendall(text.encode() + b"\n")
                else:
                    client.conn.sendall(ws_encode_text(text))
            except OSError:
                self._drop(client)
                return

    def _reader_loop(self, client: _Client) -> None:
        try:
            if client.kind == "tcp":
                buf = b""
                while client.alive and not self._stop.is_set():
                    chunk = client.conn.recv(4096)
                    if not chunk:
                        break
                    buf += chunk
                    while b"\n" in buf:
                        line, buf = buf.split(b"\n", 1)
                        self._handle_text(client, line)
            else:
                reader = _WsReader(client.conn)
                while client.alive and not self._stop.is_set():
                    opcode, payload = reader.read_message()
                    if opcode is None or opcode == 0x8:
                        break
                    if opcode == 0x9:  # ping -> pong
                        client.conn.sendall(_ws_frame(0xA, payload))
                        continue
                    if opcode in (0x1, 0x2):
                        self._handle_text(client, payload)
        except OSError:
            pass
        finally:
            self._drop(client)

    def _handle_text(self, client: _Client, raw: bytes) -> None:
        raw = raw.strip()
        if not raw:
            return
        try:
            msg = json.loads(raw)
            if not isinstance(msg, dict):
                raise ValueError("message must be an object")
        except (json.JSONDecodeError, ValueError) as e:
            self._error_to(client, f"malformed message: {e}")
            return
        self.inbox.put((client, msg))

    def _drop(self, client: _Client) -> None:
        client.alive = False
        try:
            client.conn.close()
        except OSError:
            pass
        with self._lock:
            if client in self.clients:
                self.clients.remove(client)


# ---------------------------------------------------------------------------
# minimal server-side WebSocket (RFC 6455): handshake + text frames
# ---------------------------------------------------------------------------

def _ws_handshake(conn: socket.socket) -> None:
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = conn.recv(4096)
        if not chunk:
            raise ValueError("connection closed during handshake")
        data += chunk
        if len(data) > 65536:
            raise ValueError("oversized handshake")
    headers = {}
    for line in data.split(b"\r\n")[1:]:
        if b":" in line:
            name, value = line.split(b":", 1)
            headers[name.strip().lower()] = value.strip()
    key = headers.get(b"sec-websocket-key")
    if key is None:
        raise ValueError("missing Sec-WebSocket-Key")
    accept = base64.b64encode(
        hashlib.sha1(key + WS_GUID.encode()).digest()).decode()
    conn.sendall((
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept}\r\n\r\n").encode())


def _ws_frame(opcode: int, payload: bytes) -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 65536:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


def ws_encode_text(text: str) -> bytes:
    return _ws_frame(0x1, text.encode())


class _WsReader:
    def __init__(self, conn: socket.socket):
        self.conn = conn
        self.buf = b""

    def _need(self, n: int) -> bytes:
        while len(self.buf) < n:
            chunk = self.conn.recv(4096)
            if not chunk:
                return b""
            self.buf += chunk
        out, self.buf = self.buf[:n], self.buf[n:]
        return out

    def read_message(self):
        """Returns (opcode, payload) or (None, b'') on EOF."""
        head = self._need(2)
        if len(head) < 2:
            return None, b""
        fin_op, mask_len = head[0], head[1]
        opcode = fin_op & 0x0F
        masked = mask_len & 0x80
        n = mask_len & 0x7F
        if n == 126:
            n = struct.unpack(">H", self._need(2))[0]
        elif n == 127:
            n = struct.unpack(">Q", self._need(8))[0]
        mask = self._need(4) if masked else b"\x00" * 4
        payload = self._need(n) if n else b""
        if masked and payload:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return opcode, payload


def ws_client_encode_text(text: str, mask: bytes = b"\x12\x34\x56\x78") -> bytes:
    """Client-side masked text frame (used by tests and scripted clients)."""
    payload = text.encode()
    masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    head = bytes([0x81])
    n = len(payload)
    if n < 126:
        head += bytes([0x80 | n])
    elif n < 65536:
        head += bytes([0x80 | 126]) + struct.pack(">H", n)
    else:
        head += bytes([0x80 | 127]) + struct.pack(">Q", n)
    return head + mask + masked
