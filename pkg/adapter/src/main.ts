#!/usr/bin/env node
/**
 * uhlm-adapter: logit server for the uhlm external-backend protocol.
 *
 *   uhlm-adapter --slm <name> --llm <name> --listen <stdio|tcp:PORT>
 *
 * Model names other than "synthetic" load real causal LMs through the
 * transformers bridge; the default synthetic pair matches the reference
 * models' 32000-token vocabulary and needs no weights.
 */

import { BridgeEngine } from './bridge.js';
import { SyntheticEngine, type LogitEngine } from './engine.js';
import { serveStdio, serveTcp } from './server.js';

interface CliOptions {
  slm: string;
  llm: string;
  listen: string;
  vocabSize: number;
  eosId: number;
  seed: number;
  maxContext: number;
  device?: string;
  dtype?: string;
}

function parseArgs(argv: string[]): CliOptions {
  const options: CliOptions = {
    slm: 'synthetic',
    llm: 'synthetic',
    listen: 'stdio',
    vocabSize: 32000,
    eosId: 2,
    seed: 0,
    maxContext: 4096,
  };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      const value = argv[++i];
      if (value === undefined) throw new Error(`missing value for ${arg}`);
      return value;
    };
    switch (arg) {
      case '--slm': options.slm = next(); break;
      case '--llm': options.llm = next(); break;
      case '--listen': options.listen = next(); break;
      case '--vocab-size': options.vocabSize = Number(next()); break;
      case '--eos-id': options.eosId = Number(next()); break;
      case '--seed': options.seed = Number(next()); break;
      case '--max-context': options.maxContext = Number(next()); break;
      case '--device': options.device = next(); break;
      case '--dtype': options.dtype = next(); break;
      case '--help':
      case '-h':
        console.log('usage: uhlm-adapter --slm <name> --llm <name> --listen <stdio|tcp:PORT>');
        process.exit(0);
        break;
      default:
        throw new Error(`unknown argument ${arg}`);
    }
  }
  return options;
}

async function buildEngine(options: CliOptions): Promise<LogitEngine> {
  const synthetic = options.slm === 'synthetic' && options.llm === 'synthetic';
  if (synthetic) {
    return new SyntheticEngine({
      vocabSize: options.vocabSize,
      eosId: options.eosId,
      seed: options.seed,
    });
  }
  if (options.slm === 'synthetic' || options.llm === 'synthetic') {
    throw new Error('mixed synthetic/real model pairs cannot share a vocabulary');
  }
  return BridgeEngine.start({
    slm: options.slm,
    llm: options.llm,
    device: options.device,
    dtype: options.dtype,
    maxContext: options.maxContext,
  });
}

async function main(): Promise<void> {
  const options = parseArgs(process.argv.slice(2));
  const engine = await buildEngine(options);
  const shutdown = async () => {
    await engine.close();
    process.exit(0);
  };
  process.on('SIGINT', shutdown);
  process.on('SIGTERM', shutdown);

  if (options.listen === 'stdio') {
    await serveStdio(engine, { maxContext: options.maxContext });
    await engine.close();
    return;
  }
  const match = /^(?:tcp:)?(?:([\w.]+):)?(\d+)$/.exec(options.listen);
  if (!match) {
    throw new Error(`--listen must be "stdio" or "tcp:<port>", got ${options.listen}`);
  }
  const { port } = await serveTcp(engine, Number(match[2]), { maxContext: options.maxContext });
  console.error(`uhlm-adapter listening on tcp://127.0.0.1:${port}`);
}

main().catch((err) => {
  // Startup failures surface as a protocol error frame, then a clean exit.
  process.stdout.write(JSON.stringify({ id: null, error: String(err.message ?? err) }) + '\n');
  process.exit(1);
});
