/**
 * Wire protocol frames: newline-delimited JSON, one handshake line on
 * startup, then strictly one request/response exchange at a time.
 *
 *   handshake: {"hello": {"vocab_size": <int>, "eos_id": <int>}}
 *   request:   {"id": <int>, "role": "slm"|"llm", "tokens": [<int>, ...]}
 *   response:  {"id": <int>, "logits": [<float> x vocab_size]}
 *   error:     {"id": <int>, "error": "<message>"}
 */

export type Role = 'slm' | 'llm';

export interface Handshake {
  hello: { vocab_size: number; eos_id: number };
}

export interface LogitRequest {
  id: number;
  role: Role;
  tokens: number[];
}

export interface LogitResponse {
  id: number;
  logits: number[];
}

export interface ErrorFrame {
  id: number | null;
  error: string;
}

export function handshakeFrame(vocabSize: number, eosId: number): string {
  return JSON.stringify({ hello: { vocab_size: vocabSize, eos_id: eosId } });
}

export function errorFrame(id: number | null, message: string): string {
  return JSON.stringify({ id, error: message });
}

export function responseFrame(id: number, logits: number[]): string {
  // Stream the array manually: JSON.stringify on 32k-element arrays is fine,
  // but numbers must serialize deterministically, which JS guarantees.
  return JSON.stringify({ id, logits });
}

export class RequestError extends Error {
  constructor(public requestId: number | null, message: string) {
    super(message);
  }
}

/** Parse and validate one request line. Throws RequestError with the best
 * available id so the server can answer with an error frame. */
export function parseRequest(line: string, vocabSize: number, maxContext: number): LogitRequest {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch {
    throw new RequestError(null, 'invalid JSON');
  }
  if (typeof doc !== 'object' || doc === null || Array.isArray(doc)) {
    throw new RequestError(null, 'request must be a JSON object');
  }
  const frame = doc as Record<string, unknown>;
  const id = typeof frame.id === 'number' && Number.isInteger(frame.id) ? frame.id : null;
  if (id === null) {
    throw new RequestError(null, 'request id must be an integer');
  }
  if (frame.role !== 'slm' && frame.role !== 'llm') {
    throw new RequestError(id, `unknown role ${JSON.stringify(frame.role)}`);
  }
  if (!Array.isArray(frame.tokens)) {
    throw new RequestError(id, 'tokens must be an array');
  }
  if (frame.tokens.length === 0) {
    throw new RequestError(id, 'empty sequence');
  }
  if (frame.tokens.length > maxContext) {
    throw new RequestError(id, `sequence longer than max context ${maxContext}`);
  }
  for (const tok of frame.tokens) {
    if (typeof tok !== 'number' || !Number.isInteger(tok) || tok < 0 || tok >= vocabSize) {
      throw new RequestError(id, `token ${JSON.stringify(tok)} outside vocabulary of size ${vocabSize}`);
    }
  }
  return { id, role: frame.role, tokens: frame.tokens as number[] };
}
