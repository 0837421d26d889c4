/**
 * Logit engines. The synthetic pair is fully deterministic: logits are a
 * pure function of (seed, role, token sequence), so repeated requests and
 * separate server processes agree bitwise.
 */

import type { Role } from './protocol.js';

export interface LogitEngine {
  readonly vocabSize: number;
  readonly eosId: number;
  nextLogits(role: Role, tokens: number[]): Promise<number[]>;
  close(): Promise<void>;
}

/** FNV-1a over a byte stream, 32-bit. */
function fnv1a(bytes: number[]): number {
  let hash = 0x811c9dc5;
  for (const b of bytes) {
    hash ^= b & 0xff;
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

/** Deterministic 32-bit PRNG (mulberry32). */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface SyntheticOptions {
  vocabSize?: number;
  eosId?: number;
  seed?: number;
}

/**
 * Procedural stand-in for a pretrained model pair sharing one vocabulary.
 * The two roles hash differently, so the draft and target distributions
 * disagree the way distinct models would.
 */
export class SyntheticEngine implements LogitEngine {
  readonly vocabSize: number;
  readonly eosId: number;
  private readonly seed: number;

  constructor(options: SyntheticOptions = {}) {
    this.vocabSize = options.vocabSize ?? 32000;
    this.eosId = options.eosId ?? 2;
    this.seed = options.seed ?? 0;
    if (this.vocabSize < 2 || this.eosId < 0 || this.eosId >= this.vocabSize) {
      throw new Error(`invalid vocabulary: size=${this.vocabSize} eos=${this.eosId}`);
    }
  }

  async nextLogits(role: Role, tokens: number[]): Promise<number[]> {
    const bytes: number[] = [this.seed & 0xff, (this.seed >>> 8) & 0xff];
    for (const ch of role) bytes.push(ch.charCodeAt(0));
    for (const tok of tokens) {
      bytes.push(tok & 0xff, (tok >>> 8) & 0xff, (tok >>> 16) & 0xff);
    }
    const rand = mulberry32(fnv1a(bytes));
    const logits = new Array<number>(this.vocabSize);
    for (let v = 0; v < this.vocabSize; v++) {
      // Box-Muller; two uniforms per normal keeps the stream simple.
      const u1 = Math.max(rand(), 1e-12);
      const u2 = rand();
      logits[v] = Math.sqrt(-2 * Math.log(u1)) * Math.cos(2 * Math.PI * u2);
    }
    return logits;
  }

  async close(): Promise<void> {}
}
