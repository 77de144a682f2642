// Wire protocol spoken by the gateway's /ws endpoint. The server is the
// single source of truth: every visible character the UI shows originates
// from a snapshot or print message, never from local key handling.

export interface PagePayload {
  width: number;
  rows: string[];
  carriage_row: number;
  carriage_col: number;
}

export interface SnapshotMessage {
  type: "snapshot";
  page: PagePayload;
}

export interface PrintMessage {
  type: "print";
  ch: string;
  row: number;
  col: number;
}

export interface CarriageMessage {
  type: "carriage";
  row: number;
  col: number;
}

export type SessionStateName = "Idle" | "Composing" | "AwaitingAnswer" | "Printing";

export interface StateMessage {
  type: "state";
  value: SessionStateName;
}

export interface BellMessage {
  type: "bell";
}

export interface ErrorMessage {
  type: "error";
  reason: string;
}

export type ServerMessage =
  | SnapshotMessage
  | PrintMessage
  | CarriageMessage
  | StateMessage
  | BellMessage
  | ErrorMessage;

export type ControlName = "CarriageReturn" | "LineFeed" | "Backspace" | "Bell";

export type KeyMessage = { type: "key"; ch: string } | { type: "key"; ctrl: ControlName };

const STATE_NAMES = new Set(["Idle", "Composing", "AwaitingAnswer", "Printing"]);

function isPage(value: unknown): value is PagePayload {
  if (typeof value !== "object" || value === null) return false;
  const page = value as Record<string, unknown>;
  return (
    typeof page.width === "number" &&
    Array.isArray(page.rows) &&
    page.rows.every((r) => typeof r === "string") &&
    typeof page.carriage_row === "number" &&
    typeof page.carriage_col === "number"
  );
}

/** Parse one server frame; null for anything that does not conform. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let value: unknown;
  try {
    value = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof value !== "object" || value === null) return null;
  const msg = value as Record<string, unknown>;
  switch (msg.type) {
    case "snapshot":
      return isPage(msg.page) ? { type: "snapshot", page: msg.page } : null;
    case "print":
      if (
        typeof msg.ch === "string" &&
        msg.ch.length > 0 &&
        typeof msg.row === "number" &&
        typeof msg.col === "number"
      ) {
        return { type: "print", ch: msg.ch, row: msg.row, col: msg.col };
      }
      return null;
    case "carriage":
      if (typeof msg.row === "number" && typeof msg.col === "number") {
        return { type: "carriage", row: msg.row, col: msg.col };
      }
      return null;
    case "state":
      if (typeof msg.value === "string" && STATE_NAMES.has(msg.value)) {
        return { type: "state", value: msg.value as SessionStateName };
      }
      return null;
    case "bell":
      return { type: "bell" };
    case "error":
      return typeof msg.reason === "string" ? { type: "error", reason: msg.reason } : null;
    default:
      return null;
  }
}

export function encodeKeyMessage(msg: KeyMessage): string {
  return JSON.stringify(msg);
}
