// Payload shapes of the orchestrator service API.

export interface WorkflowSummary {
  id: string
  metadata: Record<string, string>
  initial_state: string
  state_count: number
  transition_count: number
}

export interface StateNode {
  id: string
  human_label: string
  helper_doc: string | null
  requires_confirmation: boolean
  terminal: boolean
}

export interface TransitionEdge {
  trigger: string
  source: string
  destination: string
  autopilot_default: boolean
}

export interface WorkflowGraph {
  id: string
  metadata: Record<string, string>
  initial_state: string
  terminal_states: string[]
  states: StateNode[]
  transitions: TransitionEdge[]
  jump_states: { trigger: string; description: string }[]
  dot?: string
}

export interface AdmissibleCommand {
  trigger: string
  kind: 'transition' | 'jump' | 'global'
}

export interface StateSummary {
  session_id: string
  workflow_id: string
  active_workflow: string
  state: string
  state_label: string
  terminal: boolean
  requires_confirmation: boolean
  admissible: AdmissibleCommand[]
  autopilot_enabled: boolean
  stack: { workflow_id: string; state_id: string }[]
  depth: number
  seq: number
  status: 'live' | 'ended'
}

export interface SessionRecord {
  session_id: string
  workflow_id: string
  created_at: number
  status: 'live' | 'ended'
  log_path: string
}

export interface SessionEnvelope {
  session: SessionRecord
  state: StateSummary
}

export interface RankedCandidate {
  trigger: string
  kind: string
  d_lev: number
  d_jac: number
  s_cos: number
}

export interface Decision {
  outcome: 'matched' | 'rejected'
  trigger: string | null
  branch: string | null
  reason: string | null
  ranking: RankedCandidate[]
}

export interface UtteranceResponse {
  decision: Decision
  state: StateSummary
  error?: { error: string; message: string }
  autopilot?: { halt: string; steps?: number }
}

export interface FireResponse {
  state: StateSummary
  autopilot?: { halt: string; steps?: number }
}

export interface SessionEvent {
  seq: number
  timestamp: number
  session_id: string
  type: string
  payload: Record<string, unknown>
}

export interface HelperDocument {
  key: string
  content: string
}

export interface HelperResponse {
  state: string
  mode: string
  documents: HelperDocument[]
  cursor: number
  notice?: string
}

export type ConnectionStatus = 'idle' | 'connecting' | 'live' | 'lost'
