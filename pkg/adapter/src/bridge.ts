/**
 * Engine that wraps real pretrained causal language models by delegating
 * tensor work to a Python child process (transformers). The child speaks
 * the same NDJSON protocol on its own stdio; this side owns transport,
 * validation, and lifecycle, and simply proxies logits through.
 */

import { spawn, type ChildProcessByStdio } from 'node:child_process';
import { createInterface, type Interface } from 'node:readline';
import { dirname, join } from 'node:path';
import type { Readable, Writable } from 'node:stream';
import { fileURLToPath } from 'node:url';

import type { LogitEngine } from './engine.js';
import type { Role } from './protocol.js';

const BRIDGE_SCRIPT = join(dirname(fileURLToPath(import.meta.url)), 'bridge.py');

export interface BridgeOptions {
  slm: string;
  llm: string;
  device?: string;
  dtype?: string;
  maxContext?: number;
  python?: string;
  startupTimeoutMs?: number;
}

type BridgeChild = ChildProcessByStdio<Writable, Readable, null>;

interface Pending {
  resolve: (logits: number[]) => void;
  reject: (err: Error) => void;
}

export class BridgeEngine implements LogitEngine {
  readonly vocabSize: number;
  readonly eosId: number;
  private readonly child: BridgeChild;
  private readonly lines: Interface;
  private nextId = 0;
  private pending = new Map<number, Pending>();

  private constructor(child: BridgeChild, vocabSize: number, eosId: number) {
    this.child = child;
    this.vocabSize = vocabSize;
    this.eosId = eosId;
    this.lines = createInterface({ input: child.stdout });
    this.lines.on('line', (line) => this.onLine(line));
    child.on('exit', () => this.failAll(new Error('model bridge exited')));
  }

  static async start(options: BridgeOptions): Promise<BridgeEngine> {
    const args = [BRIDGE_SCRIPT, '--slm', options.slm, '--llm', options.llm];
    if (options.device) args.push('--device', options.device);
    if (options.dtype) args.push('--dtype', options.dtype);
    if (options.maxContext) args.push('--max-context', String(options.maxContext));
    const child = spawn(options.python ?? 'python3', args, {
      stdio: ['pipe', 'pipe', 'inherit'],
    });

    const firstLine = await new Promise<string>((resolve, reject) => {
      const timeoutMs = options.startupTimeoutMs ?? 600_000;
      const timer = setTimeout(
        () => reject(new Error(`model bridge produced no handshake within ${timeoutMs} ms`)),
        timeoutMs,
      );
      const rl = createInterface({ input: child.stdout });
      rl.once('line', (line) => {
        clearTimeout(timer);
        rl.close();
        resolve(line);
      });
      child.once('exit', (code) => {
        clearTimeout(timer);
        reject(new Error(`model bridge exited with code ${code} before handshake`));
      });
      child.once('error', (err) => {
        clearTimeout(timer);
        reject(err);
      });
    });

    const doc = JSON.parse(firstLine);
    if (doc.error !== undefined) {
      child.kill();
      throw new Error(`model bridge failed to load: ${doc.error}`);
    }
    if (!doc.hello || typeof doc.hello.vocab_size !== 'number') {
      child.kill();
      throw new Error(`model bridge sent a malformed handshake: ${firstLine}`);
    }
    return new BridgeEngine(child, doc.hello.vocab_size, doc.hello.eos_id);
  }

  private onLine(line: string): void {
    let doc: { id?: number; logits?: number[]; error?: string };
    try {
      doc = JSON.parse(line);
    } catch {
      this.failAll(new Error(`model bridge sent invalid JSON: ${line.slice(0, 120)}`));
      return;
    }
    const pending = typeof doc.id === 'number' ? this.pending.get(doc.id) : undefined;
    if (!pending) return;
    this.pending.delete(doc.id as number);
    if (doc.error !== undefined) {
      pending.reject(new Error(doc.error));
    } else if (!Array.isArray(doc.logits) || doc.logits.length !== this.vocabSize) {
      pending.reject(new Error('model bridge returned a malformed logit vector'));
    } else {
      pending.resolve(doc.logits);
    }
  }

  private failAll(err: Error): void {
    for (const pending of this.pending.values()) pending.reject(err);
    this.pending.clear();
  }

  nextLogits(role: Role, tokens: number[]): Promise<number[]> {
    const id = ++this.nextId;
    const frame = JSON.stringify({ id, role, tokens });
    return new Promise<number[]>((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.child.stdin.write(frame + '\n', (err) => {
        if (err) {
          this.pending.delete(id);
          reject(err);
        }
      });
    });
  }

  async close(): Promise<void> {
    this.lines.close();
    this.child.kill();
  }
}
