// Key capture: DOM-free mapping plus a rate-limited send queue so a paste
// of a thousand characters trickles out at typewriter-plausible speed
// without losing a single key.

import type { KeyMessage } from "./protocol.js";

export interface KeyEventLike {
  key: string;
  ctrlKey?: boolean;
  metaKey?: boolean;
  altKey?: boolean;
}

/** Map a keyboard event to a key message; null for keys the machine lacks. */
export function mapKeyboardEvent(ev: KeyEventLike): KeyMessage | null {
  if (ev.ctrlKey || ev.metaKey || ev.altKey) return null;
  switch (ev.key) {
    case "Enter":
      return { type: "key", ctrl: "LineFeed" };
    case "Backspace":
      return { type: "key", ctrl: "Backspace" };
    case "Escape":
      return { type: "key", ctrl: "Bell" }; // the panic key: aborts printing
    default:
      return ev.key.length === 1 ? { type: "key", ch: ev.key } : null;
  }
}

/** Split pasted text into key messages ('\n' becomes LineFeed). */
export function mapPastedText(text: string): KeyMessage[] {
  const out: KeyMessage[] = [];
  for (const ch of text) {
    if (ch === "\n") {
      out.push({ type: "key", ctrl: "LineFeed" });
    } else if (ch === "\r") {
      continue;
    } else {
      out.push({ type: "key", ch });
    }
  }
  return out;
}

export interface KeyQueueOptions {
  /** Messages sent immediately when the queue is empty. */
  burst?: number;
  ratePerSecond?: number;
  setIntervalFn?: (fn: () => void, ms: number) => unknown;
  clearIntervalFn?: (handle: unknown) => void;
}

/**
 * Order-preserving key sender. Up to `burst` messages go out immediately;
 * the rest drain on a timer at `ratePerSecond`. Nothing is ever dropped.
 */
export class KeyQueue {
  private readonly send: (msg: KeyMessage) => boolean;
  private readonly burst: number;
  private readonly intervalMs: number;
  private readonly setIntervalFn: (fn: () => void, ms: number) => unknown;
  private readonly clearIntervalFn: (handle: unknown) => void;

  private queue: KeyMessage[] = [];
  private timer: unknown = null;
  private recentSends = 0;
  sent = 0;

  constructor(send: (msg: KeyMessage) => boolean, options: KeyQueueOptions = {}) {
    this.send = send;
    this.burst = options.burst ?? 8;
    this.intervalMs = 1000 / (options.ratePerSecond ?? 30);
    this.setIntervalFn = options.setIntervalFn ?? ((fn, ms) => setInterval(fn, ms));
    this.clearIntervalFn = options.clearIntervalFn ?? ((h) => clearInterval(h as number));
  }

  push(msg: KeyMessage): void {
    if (this.timer === null && this.recentSends < this.burst) {
      if (this.send(msg)) {
        this.sent += 1;
        this.recentSends += 1;
        return;
      }
      // transport not ready: fall through and queue it
    }
    this.queue.push(msg);
    this.startDraining();
  }

  pushAll(messages: KeyMessage[]): void {
    for (const msg of messages) {
      this.push(msg);
    }
  }

  private startDraining(): void {
    if (this.timer !== null) return;
    this.timer = this.setIntervalFn(() => this.drainTick(), this.intervalMs);
  }

  private drainTick(): void {
    const msg = this.queue[0];
    if (msg === undefined) {
      this.stopDraining();
      return;
    }
    if (this.send(msg)) {
      this.queue.shift();
      this.sent += 1;
    }
    // on send failure the message stays queued for the next tick
  }

  private stopDraining(): void {
    if (this.timer !== null) {
      this.clearIntervalFn(this.timer);
      this.timer = null;
    }
    this.recentSends = 0;
  }

  get pending(): number {
    return this.queue.length;
  }

  dispose(): void {
    if (this.timer !== null) {
      this.clearIntervalFn(this.timer);
      this.timer = null;
    }
    this.queue = [];
  }
}
