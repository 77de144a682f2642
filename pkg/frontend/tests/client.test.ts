import { describe, expect, it } from "vitest";

import { Backoff } from "../src/backoff.js";
import { TypewriterClient, type WebSocketLike } from "../src/client.js";
import type { ServerMessage } from "../src/protocol.js";

class FakeSocket implements WebSocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  serverSends(payload: unknown): void {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }
}

interface Harness {
  client: TypewriterClient;
  sockets: FakeSocket[];
  messages: ServerMessage[];
  statuses: string[];
  timers: Array<{ fn: () => void; ms: number }>;
}

function makeHarness(): Harness {
  const sockets: FakeSocket[] = [];
  const messages: ServerMessage[] = [];
  const statuses: string[] = [];
  const timers: Array<{ fn: () => void; ms: number }> = [];
  const client = new TypewriterClient("ws://test/ws", {
    factory: () => {
      const socket = new FakeSocket();
      sockets.push(socket);
      return socket;
    },
    backoff: new Backoff({ baseMs: 500, capMs: 4000, jitter: 0 }),
    setTimeoutFn: (fn, ms) => {
      timers.push({ fn, ms });
      return timers.length - 1;
    },
    clearTimeoutFn: () => undefined,
    onMessage: (msg) => messages.push(msg),
    onStatus: (status) => statuses.push(status),
  });
  return { client, sockets, messages, statuses, timers };
}

const SNAPSHOT = {
  type: "snapshot",
  page: { width: 60, rows: [""], carriage_row: 0, carriage_col: 0 },
};

describe("TypewriterClient", () => {
  it("discards incremental events until the snapshot arrives", () => {
    const h = makeHarness();
    h.client.connect();
    const socket = h.sockets[0];
    socket.serverSends({ type: "print", ch: "x", row: 0, col: 0 });
    socket.serverSends({ type: "state", value: "Idle" });
    expect(h.messages).toEqual([]);
    expect(h.client.droppedBeforeSnapshot).toBe(2);
    socket.serverSends(SNAPSHOT);
    socket.serverSends({ type: "print", ch: "y", row: 0, col: 0 });
    expect(h.messages.map((m) => m.type)).toEqual(["snapshot", "print"]);
  });

  it("reports online only after the snapshot", () => {
    const h = makeHarness();
    h.client.connect();
    expect(h.statuses).toEqual(["connecting"]);
    expect(h.client.online).toBe(false);
    h.sockets[0].serverSends(SNAPSHOT);
    expect(h.statuses).toEqual(["connecting", "online"]);
    expect(h.client.online).toBe(true);
  });

  it("reconnects with exponential backoff and resyncs from the new snapshot", () => {
    const h = makeHarness();
    h.client.connect();
    h.sockets[0].serverSends(SNAPSHOT);
    h.sockets[0].onclose?.();
    expect(h.statuses.at(-1)).toBe("offline");
    expect(h.timers.map((t) => t.ms)).toEqual([500]);
    h.timers[0].fn(); // first retry fails before a snapshot
    expect(h.sockets).toHaveLength(2);
    h.sockets[1].onclose?.();
    expect(h.timers.map((t) => t.ms)).toEqual([500, 1000]);
    h.timers[1].fn();
    h.sockets[2].serverSends(SNAPSHOT);
    expect(h.client.online).toBe(true);
    // backoff resets once a snapshot lands
    h.sockets[2].onclose?.();
    expect(h.timers.map((t) => t.ms)).toEqual([500, 1000, 500]);
    const snapshots = h.messages.filter((m) => m.type === "snapshot");
    expect(snapshots).toHaveLength(2);
  });

  it("sends keys only while online", () => {
    const h = makeHarness();
    h.client.connect();
    expect(h.client.sendChar("W")).toBe(false);
    h.sockets[0].serverSends(SNAPSHOT);
    expect(h.client.sendChar("W")).toBe(true);
    expect(h.client.sendControl("LineFeed")).toBe(true);
    expect(h.sockets[0].sent).toEqual([
      '{"type":"key","ch":"W"}',
      '{"type":"key","ctrl":"LineFeed"}',
    ]);
  });

  it("ignores malformed frames", () => {
    const h = makeHarness();
    h.client.connect();
    h.sockets[0].serverSends(SNAPSHOT);
    h.sockets[0].onmessage?.({ data: "garbage{{{" });
    h.sockets[0].onmessage?.({ data: 17 });
    expect(h.messages).toHaveLength(1);
  });

  it("close() stops reconnecting", () => {
    const h = makeHarness();
    h.client.connect();
    h.sockets[0].serverSends(SNAPSHOT);
    h.client.close();
    expect(h.sockets[0].closed).toBe(true);
    expect(h.timers).toHaveLength(0);
  });
});
