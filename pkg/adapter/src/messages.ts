/**
 * Wire protocol (v1): newline-delimited JSON over the engine's stdio.
 * Every request receives exactly one reply.
 */

export const PROTOCOL_VERSION = 1;

/** Slot index to walk to, or null to stay. */
export type Action = number | null;

/** Per-agent observation: one [distance, remainingWork] row per task slot. */
export type Observation = number[][];

export interface TaskSpecPayload {
  type: number;
  workload: number;
  capacity: number;
  priority?: number;
  reward_scale?: number;
  /** [x, y] for stationary tasks, null for random respawn. */
  location?: [number, number] | null;
}

export interface AgentSpecPayload {
  skills: number[];
  /** [x, y] fixed spawn, null for uniform over free cells. */
  spawn?: [number, number] | null;
}

/** Mirrors the engine's resolved env config (plan as ASCII rows of '#'/'.'). */
export interface EnvConfigPayload {
  plan: string;
  task_catalog: TaskSpecPayload[];
  agents: AgentSpecPayload[];
  arrival_probability: number;
  decision_interval: number;
  horizon: number;
  illegal_action_penalty: number;
  seed: number;
}

export interface HelloRequest {
  v: typeof PROTOCOL_VERSION;
  kind: 'hello';
}

export interface ResetRequest {
  v: typeof PROTOCOL_VERSION;
  kind: 'reset';
  config: EnvConfigPayload;
  /** Engine-side path for the JSON-lines episode trace. */
  trace?: string;
}

export interface ActRequest {
  v: typeof PROTOCOL_VERSION;
  kind: 'act';
  actions: Action[];
}

export interface CloseRequest {
  v: typeof PROTOCOL_VERSION;
  kind: 'close';
}

export type Request = HelloRequest | ResetRequest | ActRequest | CloseRequest;

export interface HelloReply {
  v: number;
  kind: 'hello';
  protocol: number;
  engine: string;
}

export interface ObsReply {
  v: number;
  kind: 'obs';
  t: number;
  observations: Observation[];
}

export interface ReportReply {
  v: number;
  kind: 'report';
  t: number;
  /** Shared team reward summed over the decision interval. */
  reward: number;
  done: boolean;
  flags: boolean[];
  completed: number[];
  observations: Observation[] | null;
}

export interface CloseReply {
  v: number;
  kind: 'close';
}

export interface ErrorReply {
  v: number;
  kind: 'error';
  message: string;
}

export type Reply = HelloReply | ObsReply | ReportReply | CloseReply | ErrorReply;

export function isErrorReply(reply: Reply): reply is ErrorReply {
  return reply.kind === 'error';
}
