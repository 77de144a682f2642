// Reconnecting WebSocket client with snapshot-first discipline.
//
// The server always sends a full snapshot as the first frame of a
// connection; until that snapshot arrives the client discards incremental
// events, so a half-open or replayed connection can never invent or
// duplicate characters. Reconnects back off exponentially and the fresh
// snapshot resets the view.

import { Backoff } from "./backoff.js";
import {
  encodeKeyMessage,
  parseServerMessage,
  type ControlName,
  type KeyMessage,
  type ServerMessage,
} from "./protocol.js";

export interface WebSocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface ClientOptions {
  factory?: WebSocketFactory;
  backoff?: Backoff;
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
  clearTimeoutFn?: (handle: unknown) => void;
  onMessage?: (msg: ServerMessage) => void;
  onStatus?: (status: "connecting" | "online" | "offline") => void;
}

export class TypewriterClient {
  readonly url: string;
  private readonly factory: WebSocketFactory;
  private readonly backoff: Backoff;
  private readonly setTimeoutFn: (fn: () => void, ms: number) => unknown;
  private readonly clearTimeoutFn: (handle: unknown) => void;
  private readonly onMessage: (msg: ServerMessage) => void;
  private readonly onStatus: (status: "connecting" | "online" | "offline") => void;

  private socket: WebSocketLike | null = null;
  private snapshotSeen = false;
  private closed = false;
  private pendingTimer: unknown = null;
  droppedBeforeSnapshot = 0;

  constructor(url: string, options: ClientOptions = {}) {
    this.url = url;
    this.factory =
      options.factory ?? ((target: string) => new WebSocket(target) as unknown as WebSocketLike);
    this.backoff = options.backoff ?? new Backoff();
    this.setTimeoutFn = options.setTimeoutFn ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimeoutFn = options.clearTimeoutFn ?? ((handle) => clearTimeout(handle as number));
    this.onMessage = options.onMessage ?? (() => undefined);
    this.onStatus = options.onStatus ?? (() => undefined);
  }

  connect(): void {
    if (this.closed) return;
    this.snapshotSeen = false;
    this.onStatus("connecting");
    let socket: WebSocketLike;
    try {
      socket = this.factory(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      // the connection only counts once the snapshot lands
    };
    socket.onmessage = (ev) => {
      if (typeof ev.data !== "string") return;
      const msg = parseServerMessage(ev.data);
      if (msg === null) return;
      if (!this.snapshotSeen) {
        if (msg.type !== "snapshot") {
          this.droppedBeforeSnapshot += 1;
          return; // never render state we cannot anchor to a snapshot
        }
        this.snapshotSeen = true;
        this.backoff.reset();
        this.onStatus("online");
      }
      this.onMessage(msg);
    };
    socket.onerror = () => {
      // onclose follows; nothing to do here
    };
    socket.onclose = () => {
      this.socket = null;
      if (this.closed) return;
      this.onStatus("offline");
      this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.closed || this.pendingTimer !== null) return;
    const delay = this.backoff.nextDelayMs();
    this.pendingTimer = this.setTimeoutFn(() => {
      this.pendingTimer = null;
      this.connect();
    }, delay);
  }

  get online(): boolean {
    return this.socket !== null && this.snapshotSeen;
  }

  sendKey(msg: KeyMessage): boolean {
    if (!this.online || this.socket === null) return false;
    this.socket.send(encodeKeyMessage(msg));
    return true;
  }

  sendChar(ch: string): boolean {
    return this.sendKey({ type: "key", ch });
  }

  sendControl(ctrl: ControlName): boolean {
    return this.sendKey({ type: "key", ctrl });
  }

  close(): void {
    this.closed = true;
    if (this.pendingTimer !== null) {
      this.clearTimeoutFn(this.pendingTimer);
      this.pendingTimer = null;
    }
    this.socket?.close();
    this.socket = null;
  }
}
