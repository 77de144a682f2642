// Typewriter clatter, synthesized client-side (no audio assets).
// Off by default; a short filtered noise burst per struck character and a
// brighter ding for the bell.

export class TypewriterSound {
  enabled = false;
  private context: AudioContext | null = null;

  private ensureContext(): AudioContext | null {
    if (typeof AudioContext === "undefined") return null;
    if (this.context === null) {
      this.context = new AudioContext();
    }
    return this.context;
  }

  toggle(): boolean {
    this.enabled = !this.enabled;
    if (this.enabled) this.ensureContext()?.resume();
    return this.enabled;
  }

  click(): void {
    if (!this.enabled) return;
    const ctx = this.ensureContext();
    if (ctx === null) return;
    const length = Math.floor(ctx.sampleRate * 0.02);
    const buffer = ctx.createBuffer(1, length, ctx.sampleRate);
    const data = buffer.getChannelData(0);
    for (let i = 0; i < length; i += 1) {
      data[i] = (Math.random() * 2 - 1) * (1 - i / length) ** 2;
    }
    const source = ctx.createBufferSource();
    source.buffer = buffer;
    const gain = ctx.createGain();
    gain.gain.value = 0.25;
    source.connect(gain).connect(ctx.destination);
    source.start();
  }

  ding(): void {
    if (!this.enabled) return;
    const ctx = this.ensureContext();
    if (ctx === null) return;
    const osc = ctx.createOscillator();
    osc.frequency.value = 1320;
    const gain = ctx.createGain();
    gain.gain.setValueAtTime(0.3, ctx.currentTime);
    gain.gain.exponentialRampToValueAtTime(0.001, ctx.currentTime + 0.4);
    osc.connect(gain).connect(ctx.destination);
    osc.start();
    osc.stop(ctx.currentTime + 0.4);
  }
}
