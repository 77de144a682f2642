// DOM renderer: a monospaced paper sheet with a carriage marker, a session
// state badge and a connection indicator. Deliberately no chat bubbles --
// the page is the interface.

import type { TypewriterView } from "./view_model.js";

export interface RenderTargets {
  paper: HTMLElement;
  stateBadge: HTMLElement;
  connectionBadge: HTMLElement;
  notice: HTMLElement;
}

const STATE_LABELS: Record<string, string> = {
  Idle: "bereit",
  Composing: "Sie tippen …",
  AwaitingAnswer: "Erika denkt …",
  Printing: "Erika tippt …",
};

export function renderView(view: TypewriterView, targets: RenderTargets): void {
  const rows = view.renderedRows();
  const lines: string[] = [];
  const total = Math.max(rows.length, view.carriageRow + 1);
  for (let r = 0; r < total; r += 1) {
    let line = (rows[r] ?? "").padEnd(view.width, " ");
    if (r === view.carriageRow) {
      const col = Math.min(view.carriageCol, view.width - 1);
      line = line.slice(0, col) + "█" + line.slice(col + 1);
    }
    lines.push(line);
  }
  targets.paper.textContent = lines.join("\n");

  targets.stateBadge.textContent = STATE_LABELS[view.sessionState] ?? view.sessionState;
  targets.stateBadge.dataset.state = view.sessionState;

  targets.connectionBadge.textContent =
    view.connection === "online" ? "verbunden" : view.connection === "offline" ? "getrennt" : "verbinde …";
  targets.connectionBadge.dataset.status = view.connection;

  targets.notice.textContent = view.lastError ? `Hinweis: ${view.lastError}` : "";
}
