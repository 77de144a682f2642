// Reconnect backoff: exponential with a ceiling, optional jitter.

export interface BackoffOptions {
  baseMs?: number;
  capMs?: number;
  factor?: number;
  /** 0..1; portion of the delay randomized. 0 keeps it deterministic. */
  jitter?: number;
  random?: () => number;
}

export class Backoff {
  private attempt = 0;
  private readonly baseMs: number;
  private readonly capMs: number;
  private readonly factor: number;
  private readonly jitter: number;
  private readonly random: () => number;

  constructor(options: BackoffOptions = {}) {
    this.baseMs = options.baseMs ?? 500;
    this.capMs = options.capMs ?? 10_000;
    this.factor = options.factor ?? 2;
    this.jitter = options.jitter ?? 0.25;
    this.random = options.random ?? Math.random;
  }

  nextDelayMs(): number {
    const raw = Math.min(this.capMs, this.baseMs * this.factor ** this.attempt);
    this.attempt += 1;
    if (this.jitter <= 0) return raw;
    const spread = raw * this.jitter;
    return raw - spread + 2 * spread * this.random();
  }

  reset(): void {
    this.attempt = 0;
  }

  get attempts(): number {
    return this.attempt;
  }
}
