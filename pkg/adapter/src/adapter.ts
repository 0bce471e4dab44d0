/**
 * WareflowEnv: a standard episodic reset/step environment backed by the
 * wareflow engine running as a child process.
 *
 * One adapter instance owns one engine process and speaks strict
 * request-reply over stdio: a step submits one schedule and advances a full
 * decision interval, returning the summed shared reward. Multiple instances
 * may coexist for vectorized training.
 */

import { spawn, type ChildProcessWithoutNullStreams } from 'node:child_process';
import { createInterface, type Interface } from 'node:readline';

import {
  PROTOCOL_VERSION,
  isErrorReply,
  type Action,
  type EnvConfigPayload,
  type Observation,
  type Reply,
  type ReportReply,
  type Request,
} from './messages.js';

const STDERR_TAIL_LINES = 20;

export class AdapterError extends Error {
  /** Recent engine stderr, when available. */
  readonly diagnostics: string;

  constructor(message: string, diagnostics = '') {
    super(diagnostics ? `${message}\n--- engine stderr ---\n${diagnostics}` : message);
    this.name = 'AdapterError';
    this.diagnostics = diagnostics;
  }
}

export interface StepResult {
  /** Per-agent observations for the next decision; null once done. */
  observations: Observation[] | null;
  /** Shared reward summed over the decision interval. */
  reward: number;
  done: boolean;
  info: {
    illegalFlags: boolean[];
    completedSlots: number[];
    /** Engine time after the interval. */
    time: number;
  };
}

export interface LaunchOptions {
  /** Command to start the engine; defaults to `wareflow serve --stdio`. */
  command?: string;
  args?: string[];
  env?: NodeJS.ProcessEnv;
  cwd?: string;
  /** Abort launch if the engine's hello reply takes longer than this. */
  launchTimeoutMs?: number;
}

interface Pending {
  resolve: (reply: Reply) => void;
  reject: (err: Error) => void;
}

export class WareflowEnv {
  private readonly proc: ChildProcessWithoutNullStreams;
  private readonly lines: Interface;
  private readonly pending: Pending[] = [];
  private readonly stderrTail: string[] = [];
  private exited = false;
  private episodeDone = false;
  private inEpisode = false;

  private constructor(proc: ChildProcessWithoutNullStreams) {
    this.proc = proc;
    this.lines = createInterface({ input: proc.stdout });
    this.lines.on('line', (line) => this.onLine(line));
    proc.stderr.setEncoding('utf8');
    proc.stderr.on('data', (chunk: string) => {
      for (const line of chunk.split('\n')) {
        if (line) this.stderrTail.push(line);
      }
      while (this.stderrTail.length > STDERR_TAIL_LINES) this.stderrTail.shift();
    });
    proc.on('exit', () => {
      this.exited = true;
      this.failPending(new AdapterError('engine process exited', this.diagnostics()));
    });
    proc.on('error', (err) => {
      this.exited = true;
      this.failPending(new AdapterError(`engine process error: ${err.message}`, this.diagnostics()));
    });
  }

  /** Spawn the engine and negotiate the protocol version. */
  static async launch(options: LaunchOptions = {}): Promise<WareflowEnv> {
    const command = options.command ?? 'wareflow';
    const args = options.args ?? ['serve', '--stdio'];
    const timeoutMs = options.launchTimeoutMs ?? 15000;
    const proc = spawn(command, args, {
      stdio: ['pipe', 'pipe', 'pipe'],
      env: options.env ?? process.env,
      cwd: options.cwd,
    });
    const env = new WareflowEnv(proc);
    let timer: NodeJS.Timeout | undefined;
    try {
      const reply = await Promise.race([
        env.request({ v: PROTOCOL_VERSION, kind: 'hello' }),
        new Promise<never>((_, reject) => {
          timer = setTimeout(
            () => reject(new AdapterError(`no hello reply within ${timeoutMs}ms`, env.diagnostics())),
            timeoutMs,
          );
        }),
      ]);
      if (reply.kind !== 'hello' || reply.protocol !== PROTOCOL_VERSION) {
        throw new AdapterError(`protocol negotiation failed: ${JSON.stringify(reply)}`);
      }
      return env;
    } catch (err) {
      await env.close(500);
      throw err;
    } finally {
      if (timer !== undefined) clearTimeout(timer);
    }
  }

  private diagnostics(): string {
    return this.stderrTail.join('\n');
  }

  private failPending(err: Error): void {
    while (this.pending.length > 0) {
      this.pending.shift()!.reject(err);
    }
  }

  private onLine(line: string): void {
    const waiter = this.pending.shift();
    if (waiter === undefined) {
      return; // unsolicited output; strict request-reply ignores it
    }
    try {
      waiter.resolve(JSON.parse(line) as Reply);
    } catch (err) {
      waiter.reject(new AdapterError(`unparseable reply: ${line}`, this.diagnostics()));
    }
  }

  private request(msg: Request): Promise<Reply> {
    if (this.exited) {
      return Promise.reject(new AdapterError('engine process is not running', this.diagnostics()));
    }
    return new Promise<Reply>((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.proc.stdin.write(JSON.stringify(msg) + '\n', (err) => {
        if (err) {
          const idx = this.pending.findIndex((p) => p.resolve === resolve);
          if (idx >= 0) this.pending.splice(idx, 1);
          reject(new AdapterError(`write failed: ${err.message}`, this.diagnostics()));
        }
      });
    });
  }

  private expectOk(reply: Reply): Reply {
    if (isErrorReply(reply)) {
      throw new AdapterError(`engine error: ${reply.message}`, this.diagnostics());
    }
    return reply;
  }

  /**
   * Start an episode; resolves to the per-agent observation batch
   * (one N_T x 2 matrix per agent). tracePath asks the engine to write its
   * JSON-lines trace there.
   */
  async reset(config: EnvConfigPayload, tracePath?: string): Promise<Observation[]> {
    const msg: Request =
      tracePath === undefined
        ? { v: PROTOCOL_VERSION, kind: 'reset', config }
        : { v: PROTOCOL_VERSION, kind: 'reset', config, trace: tracePath };
    const reply = this.expectOk(await this.request(msg));
    if (reply.kind !== 'obs') {
      throw new AdapterError(`expected obs reply, got ${reply.kind}`, this.diagnostics());
    }
    this.inEpisode = true;
    this.episodeDone = false;
    return reply.observations;
  }

  /** Submit one schedule (slot index or null per agent) and advance a full
   * decision interval. */
  async step(actions: Action[]): Promise<StepResult> {
    if (!this.inEpisode) {
      throw new AdapterError('step before reset');
    }
    if (this.episodeDone) {
      throw new AdapterError('step after episode end');
    }
    const reply = this.expectOk(
      await this.request({ v: PROTOCOL_VERSION, kind: 'act', actions }),
    ) as ReportReply;
    if (reply.kind !== 'report') {
      throw new AdapterError(`expected report reply, got ${reply.kind}`, this.diagnostics());
    }
    this.episodeDone = reply.done;
    return {
      observations: reply.observations,
      reward: reply.reward,
      done: reply.done,
      info: {
        illegalFlags: reply.flags,
        completedSlots: reply.completed,
        time: reply.t,
      },
    };
  }

  /** Shut the engine down; escalates to SIGKILL after the timeout so no
   * child is ever left behind. */
  async close(timeoutMs = 2000): Promise<void> {
    if (!this.exited) {
      try {
        await Promise.race([
          this.request({ v: PROTOCOL_VERSION, kind: 'close' }),
          new Promise((resolve) => setTimeout(resolve, timeoutMs)),
        ]);
      } catch {
        // the engine may already be gone; killing below is the fallback
      }
    }
    if (!this.exited) {
      const exited = new Promise<void>((resolve) => {
        this.proc.once('exit', () => resolve());
      });
      this.proc.stdin.end();
      await Promise.race([exited, new Promise((r) => setTimeout(r, timeoutMs))]);
      if (!this.exited) {
        this.proc.kill('SIGKILL');
        await exited;
      }
    }
  }

  get running(): boolean {
    return !this.exited;
  }
}
