// Wire-up: connect to the gateway, mirror its page, forward keystrokes.

import { TypewriterClient } from "./client.js";
import { KeyQueue, mapKeyboardEvent, mapPastedText } from "./keyboard.js";
import { renderView, type RenderTargets } from "./render.js";
import { TypewriterSound } from "./sound.js";
import { TypewriterView } from "./view_model.js";

function wsUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const explicit = params.get("ws");
  if (explicit) return explicit;
  const scheme = window.location.protocol === "https:" ? "wss" : "ws";
  const host = window.location.host || "127.0.0.1:8765";
  return `${scheme}://${host}/ws`;
}

function must(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el;
}

function start(): void {
  const targets: RenderTargets = {
    paper: must("paper"),
    stateBadge: must("state-badge"),
    connectionBadge: must("connection-badge"),
    notice: must("notice"),
  };
  const sound = new TypewriterSound();
  const view = new TypewriterView({
    onPrint: () => sound.click(),
    onBell: () => sound.ding(),
  });
  const redraw = () => renderView(view, targets);

  const client = new TypewriterClient(wsUrl(), {
    onMessage: (msg) => {
      view.apply(msg);
      redraw();
    },
    onStatus: (status) => {
      view.setConnection(status === "online" ? "online" : status === "offline" ? "offline" : "connecting");
      redraw();
    },
  });
  const keys = new KeyQueue((msg) => client.sendKey(msg));

  document.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement || ev.target instanceof HTMLTextAreaElement) {
      return;
    }
    const msg = mapKeyboardEvent(ev);
    if (msg !== null) {
      ev.preventDefault();
      keys.push(msg);
    }
  });

  document.addEventListener("paste", (ev) => {
    const text = ev.clipboardData?.getData("text");
    if (text) {
      ev.preventDefault();
      keys.pushAll(mapPastedText(text));
    }
  });

  const soundButton = must("sound-toggle");
  soundButton.addEventListener("click", () => {
    const on = sound.toggle();
    soundButton.textContent = on ? "Ton aus" : "Ton an";
  });

  redraw();
  client.connect();
}

document.addEventListener("DOMContentLoaded", start);
