import { describe, expect, it } from "vitest";

import type { ServerMessage } from "../src/protocol.js";
import { TypewriterView } from "../src/view_model.js";

const snapshot = (rows: string[], row = 0, col = 0): ServerMessage => ({
  type: "snapshot",
  page: { width: 60, rows, carriage_row: row, carriage_col: col },
});

describe("TypewriterView", () => {
  it("applies a snapshot verbatim", () => {
    const view = new TypewriterView();
    view.apply(snapshot(["hallo", "", "welt"], 2, 4));
    expect(view.renderedRows()).toEqual(["hallo", "", "welt"]);
    expect(view.carriageRow).toBe(2);
    expect(view.carriageCol).toBe(4);
  });

  it("applies prints in order and moves the carriage", () => {
    const view = new TypewriterView();
    view.apply(snapshot([""]));
    view.apply({ type: "print", ch: "H", row: 0, col: 0 });
    view.apply({ type: "print", ch: "i", row: 0, col: 1 });
    expect(view.renderedText()).toBe("Hi");
    expect(view.carriageCol).toBe(2);
    expect(view.printedChars).toBe(2);
  });

  it("grows rows for prints below the current page", () => {
    const view = new TypewriterView();
    view.apply(snapshot([""]));
    view.apply({ type: "print", ch: "x", row: 3, col: 2 });
    expect(view.renderedRows()).toEqual(["", "", "", "  x"]);
  });

  it("a reconnect snapshot resets accumulated state exactly", () => {
    const view = new TypewriterView();
    view.apply(snapshot([""]));
    view.apply({ type: "print", ch: "a", row: 0, col: 0 });
    view.apply({ type: "print", ch: "b", row: 0, col: 1 });
    // server's authoritative page after the gap
    view.apply(snapshot(["ab", "neu"], 1, 3));
    expect(view.renderedRows()).toEqual(["ab", "neu"]);
    expect(view.carriageRow).toBe(1);
  });

  it("never invents characters from non-print messages", () => {
    const view = new TypewriterView();
    view.apply(snapshot([""]));
    view.apply({ type: "state", value: "Composing" });
    view.apply({ type: "carriage", row: 2, col: 5 });
    view.apply({ type: "bell" });
    view.apply({ type: "error", reason: "device-owned" });
    expect(view.renderedText().trim()).toBe("");
    expect(view.sessionState).toBe("Composing");
    expect(view.bellCount).toBe(1);
    expect(view.lastError).toBe("device-owned");
  });

  it("fires print and bell hooks for sound/animation", () => {
    const strikes: string[] = [];
    let dings = 0;
    const view = new TypewriterView({
      onPrint: (ch) => strikes.push(ch),
      onBell: () => (dings += 1),
    });
    view.apply(snapshot([""]));
    view.apply({ type: "print", ch: "A", row: 0, col: 0 });
    view.apply({ type: "bell" });
    expect(strikes).toEqual(["A"]);
    expect(dings).toBe(1);
  });

  it("overstrike at the same cell keeps the latest character", () => {
    const view = new TypewriterView();
    view.apply(snapshot([""]));
    view.apply({ type: "print", ch: "a", row: 0, col: 0 });
    view.apply({ type: "print", ch: "X", row: 0, col: 0 });
    expect(view.renderedText()).toBe("X");
    expect(view.printedChars).toBe(2);
  });
});
