/**
 * Serve loop: handshake once per connection, then answer requests strictly
 * one at a time. Malformed requests get an error frame and the connection
 * stays up; an engine failure also answers with an error frame so the
 * client can surface a diagnostic.
 */

import { createInterface } from 'node:readline';
import { createServer, type Server } from 'node:net';
import type { Readable, Writable } from 'node:stream';

import type { LogitEngine } from './engine.js';
import { RequestError, errorFrame, handshakeFrame, parseRequest, responseFrame } from './protocol.js';

export interface ServeOptions {
  maxContext?: number;
}

export async function serveConnection(
  engine: LogitEngine,
  input: Readable,
  output: Writable,
  options: ServeOptions = {},
): Promise<void> {
  const maxContext = options.maxContext ?? 4096;
  output.write(handshakeFrame(engine.vocabSize, engine.eosId) + '\n');

  const lines = createInterface({ input, terminal: false });
  for await (const line of lines) {
    if (!line.trim()) continue;
    let reply: string;
    try {
      const request = parseRequest(line, engine.vocabSize, maxContext);
      const logits = await engine.nextLogits(request.role, request.tokens);
      reply = responseFrame(request.id, logits);
    } catch (err) {
      if (err instanceof RequestError) {
        reply = errorFrame(err.requestId, err.message);
      } else {
        reply = errorFrame(null, `engine failure: ${(err as Error).message}`);
      }
    }
    output.write(reply + '\n');
  }
}

export function serveStdio(engine: LogitEngine, options: ServeOptions = {}): Promise<void> {
  return serveConnection(engine, process.stdin, process.stdout, options);
}

/** TCP server answering one connection at a time; each connection gets its
 * own handshake. Resolves once listening, with the bound port. */
export function serveTcp(
  engine: LogitEngine,
  port: number,
  options: ServeOptions = {},
): Promise<{ server: Server; port: number }> {
  const server = createServer((socket) => {
    serveConnection(engine, socket, socket, options).catch(() => socket.destroy());
  });
  return new Promise((resolve, reject) => {
    server.once('error', reject);
    server.listen(port, '127.0.0.1', () => {
      const address = server.address();
      const boundPort = typeof address === 'object' && address ? address.port : port;
      resolve({ server, port: boundPort });
    });
  });
}
