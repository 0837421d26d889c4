import { spawn, type ChildProcessWithoutNullStreams } from 'node:child_process';
import { once } from 'node:events';
import { readFileSync } from 'node:fs';
import { createConnection } from 'node:net';
import { dirname, join } from 'node:path';
import { createInterface, type Interface } from 'node:readline';
import { fileURLToPath } from 'node:url';
import { afterEach, describe, expect, it } from 'vitest';

import { BridgeEngine } from '../src/bridge.js';
import { SyntheticEngine } from '../src/engine.js';
import { serveTcp } from '../src/server.js';

const HERE = dirname(fileURLToPath(import.meta.url));
const MAIN = join(HERE, '..', 'dist', 'main.js');
const GOLDEN = JSON.parse(
  readFileSync(join(HERE, '..', '..', 'tests', 'golden', 'transcripts.json'), 'utf-8'),
);

class StdioClient {
  private child: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private queue: string[] = [];
  private waiters: Array<(line: string) => void> = [];

  constructor(args: string[]) {
    this.child = spawn('node', [MAIN, ...args]);
    this.lines = createInterface({ input: this.child.stdout });
    this.lines.on('line', (line) => {
      const waiter = this.waiters.shift();
      if (waiter) waiter(line);
      else this.queue.push(line);
    });
  }

  send(frame: unknown): void {
    this.child.stdin.write(JSON.stringify(frame) + '\n');
  }

  sendRaw(line: string): void {
    this.child.stdin.write(line + '\n');
  }

  recv(timeoutMs = 15000): Promise<any> {
    const queued = this.queue.shift();
    if (queued !== undefined) return Promise.resolve(JSON.parse(queued));
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error('timed out waiting for frame')), timeoutMs);
      this.waiters.push((line) => {
        clearTimeout(timer);
        resolve(JSON.parse(line));
      });
    });
  }

  close(): void {
    this.child.kill();
  }
}

let client: StdioClient | null = null;
afterEach(() => {
  client?.close();
  client = null;
});

describe('stdio server', () => {
  it('passes the golden transcript suite', async () => {
    client = new StdioClient(['--listen', 'stdio']);
    const handshake = await client.recv();
    expect(handshake.hello.vocab_size).toBe(GOLDEN.handshake.vocab_size);
    expect(handshake.hello.eos_id).toBe(GOLDEN.handshake.eos_id);

    const logitsById = new Map<number, number[]>();
    for (const step of GOLDEN.steps) {
      client.send(step.send);
      const reply = await client.recv();
      expect(reply.id).toBe(step.send.id);
      if (step.expect === 'error') {
        expect(reply.error).toBeTypeOf('string');
        continue;
      }
      expect(reply.logits).toHaveLength(GOLDEN.handshake.vocab_size);
      logitsById.set(step.send.id, reply.logits);
      if (step.same_as !== undefined) {
        expect(reply.logits).toEqual(logitsById.get(step.same_as));
      }
      if (step.different_from !== undefined) {
        expect(reply.logits).not.toEqual(logitsById.get(step.different_from));
      }
    }
  });

  it('answers malformed lines with an error frame and keeps serving', async () => {
    client = new StdioClient(['--listen', 'stdio', '--vocab-size', '16']);
    await client.recv(); // handshake
    client.sendRaw('not json');
    const errReply = await client.recv();
    expect(errReply).toEqual({ id: null, error: expect.stringContaining('invalid JSON') });

    client.send({ id: 2, role: 'slm', tokens: [3] });
    const ok = await client.recv();
    expect(ok.id).toBe(2);
    expect(ok.logits).toHaveLength(16);
  });

  it('rejects oversized contexts and bad tokens with error frames', async () => {
    client = new StdioClient(['--listen', 'stdio', '--vocab-size', '16', '--max-context', '4']);
    await client.recv();
    client.send({ id: 1, role: 'slm', tokens: [1, 1, 1, 1, 1] });
    expect((await client.recv()).error).toMatch(/max context/);
    client.send({ id: 2, role: 'slm', tokens: [99] });
    expect((await client.recv()).error).toMatch(/outside vocabulary/);
  });

  it('is deterministic across server restarts', async () => {
    const ask = async () => {
      const c = new StdioClient(['--listen', 'stdio', '--vocab-size', '64']);
      await c.recv();
      c.send({ id: 1, role: 'llm', tokens: [7, 8, 9] });
      const reply = await c.recv();
      c.close();
      return reply.logits as number[];
    };
    expect(await ask()).toEqual(await ask());
  });

  it('rejects mixed synthetic/real pairs at startup', async () => {
    client = new StdioClient(['--slm', 'synthetic', '--llm', 'some/real-model']);
    const frame = await client.recv();
    expect(frame.error).toMatch(/mixed synthetic\/real/);
  });
});

describe('tcp server', () => {
  it('serves the protocol over a socket', async () => {
    const engine = new SyntheticEngine({ vocabSize: 32, eosId: 0 });
    const { server, port } = await serveTcp(engine, 0);
    try {
      const socket = createConnection({ host: '127.0.0.1', port });
      await once(socket, 'connect');
      const lines = createInterface({ input: socket });
      const pending: Promise<string> = once(lines, 'line').then(([l]) => l as string);
      const handshake = JSON.parse(await pending);
      expect(handshake.hello.vocab_size).toBe(32);

      socket.write(JSON.stringify({ id: 1, role: 'slm', tokens: [1, 2] }) + '\n');
      const reply = JSON.parse((await once(lines, 'line'))[0] as string);
      expect(reply.id).toBe(1);
      expect(reply.logits).toHaveLength(32);
      socket.destroy();
    } finally {
      server.close();
    }
  });
});

describe('model bridge', () => {
  it('surfaces load failures as protocol errors', async () => {
    await expect(
      BridgeEngine.start({
        slm: '/nonexistent/model-a',
        llm: '/nonexistent/model-b',
        startupTimeoutMs: 120_000,
      }),
    ).rejects.toThrowError(/model bridge (failed to load|exited)/);
  }, 150_000);
});
