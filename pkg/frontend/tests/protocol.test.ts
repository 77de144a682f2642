import { describe, expect, it } from "vitest";

import { encodeKeyMessage, parseServerMessage } from "../src/protocol.js";

describe("parseServerMessage", () => {
  it("parses a snapshot", () => {
    const raw = JSON.stringify({
      type: "snapshot",
      page: { width: 60, rows: ["hallo"], carriage_row: 0, carriage_col: 5 },
    });
    const msg = parseServerMessage(raw);
    expect(msg).not.toBeNull();
    expect(msg!.type).toBe("snapshot");
  });

  it("parses print, carriage, state, bell and error frames", () => {
    expect(parseServerMessage('{"type":"print","ch":"A","row":1,"col":2}')).toEqual({
      type: "print",
      ch: "A",
      row: 1,
      col: 2,
    });
    expect(parseServerMessage('{"type":"carriage","row":3,"col":0}')).toEqual({
      type: "carriage",
      row: 3,
      col: 0,
    });
    expect(parseServerMessage('{"type":"state","value":"Printing"}')).toEqual({
      type: "state",
      value: "Printing",
    });
    expect(parseServerMessage('{"type":"bell"}')).toEqual({ type: "bell" });
    expect(parseServerMessage('{"type":"error","reason":"device-owned"}')).toEqual({
      type: "error",
      reason: "device-owned",
    });
  });

  it("rejects malformed frames instead of throwing", () => {
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage("42")).toBeNull();
    expect(parseServerMessage('{"type":"print","ch":""}')).toBeNull();
    expect(parseServerMessage('{"type":"state","value":"Exploded"}')).toBeNull();
    expect(parseServerMessage('{"type":"snapshot","page":{"width":"x"}}')).toBeNull();
    expect(parseServerMessage('{"type":"warp"}')).toBeNull();
  });
});

describe("encodeKeyMessage", () => {
  it("round-trips through JSON", () => {
    expect(JSON.parse(encodeKeyMessage({ type: "key", ch: "W" }))).toEqual({
      type: "key",
      ch: "W",
    });
    expect(JSON.parse(encodeKeyMessage({ type: "key", ctrl: "LineFeed" }))).toEqual({
      type: "key",
      ctrl: "LineFeed",
    });
  });
});
