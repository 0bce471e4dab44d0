export { AdapterError, WareflowEnv } from './adapter.js';
export type { LaunchOptions, StepResult } from './adapter.js';
export {
  PROTOCOL_VERSION,
  isErrorReply,
} from './messages.js';
export type {
  Action,
  AgentSpecPayload,
  EnvConfigPayload,
  Observation,
  Reply,
  Request,
  TaskSpecPayload,
} from './messages.js';
