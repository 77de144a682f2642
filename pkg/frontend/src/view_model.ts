// The page mirror: a grid of printed characters plus carriage position,
// session state and connection status. Mutated exclusively by server
// messages, applied in arrival order; a snapshot resets everything it
// covers, which is what makes reconnects lossless.

import type { PagePayload, ServerMessage, SessionStateName } from "./protocol.js";

export type ConnectionStatus = "connecting" | "online" | "offline";

export interface ViewEvents {
  /** A character was struck (print animation / sound hook). */
  onPrint?(ch: string, row: number, col: number): void;
  onBell?(): void;
}

export class TypewriterView {
  width = 60;
  rows: string[][] = [];
  carriageRow = 0;
  carriageCol = 0;
  sessionState: SessionStateName = "Idle";
  connection: ConnectionStatus = "connecting";
  lastError = "";
  bellCount = 0;
  printedChars = 0;

  private events: ViewEvents;

  constructor(events: ViewEvents = {}) {
    this.events = events;
  }

  private ensureRow(row: number): void {
    while (this.rows.length <= row) {
      this.rows.push([]);
    }
  }

  applySnapshot(page: PagePayload): void {
    this.width = page.width;
    this.rows = page.rows.map((row) => Array.from(row));
    this.carriageRow = page.carriage_row;
    this.carriageCol = page.carriage_col;
  }

  apply(msg: ServerMessage): void {
    switch (msg.type) {
      case "snapshot":
        this.applySnapshot(msg.page);
        break;
      case "print":
        this.ensureRow(msg.row);
        while (this.rows[msg.row].length < msg.col) {
          this.rows[msg.row].push(" ");
        }
        this.rows[msg.row][msg.col] = msg.ch;
        this.carriageRow = msg.row;
        this.carriageCol = Math.min(msg.col + 1, this.width);
        this.printedChars += 1;
        this.events.onPrint?.(msg.ch, msg.row, msg.col);
        break;
      case "carriage":
        this.ensureRow(msg.row);
        this.carriageRow = msg.row;
        this.carriageCol = msg.col;
        break;
      case "state":
        this.sessionState = msg.value;
        break;
      case "bell":
        this.bellCount += 1;
        this.events.onBell?.();
        break;
      case "error":
        this.lastError = msg.reason;
        break;
    }
  }

  setConnection(status: ConnectionStatus): void {
    this.connection = status;
  }

  /** Rows as right-trimmed strings, the same shape the server snapshots use. */
  renderedRows(): string[] {
    return this.rows.map((cells) => cells.join("").replace(/\s+$/u, ""));
  }

  renderedText(): string {
    return this.renderedRows().join("\n");
  }
}
