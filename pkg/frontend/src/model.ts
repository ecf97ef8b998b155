// Console view model: a pure projection of the event stream and REST
// responses. No state is invented client-side; the active-state highlight
// follows the latest state_entered event and the admissible command list is
// exactly what the service last reported.

import type {
  ConnectionStatus,
  Decision,
  HelperResponse,
  SessionEvent,
  StateSummary,
  WorkflowGraph,
  WorkflowSummary,
} from './types.js'

export const EVENT_FEED_CAP = 500

export interface FiredEdge {
  trigger: string
  source: string
  destination: string
}

export class ConsoleViewModel {
  catalog: WorkflowSummary[] = []
  graph: WorkflowGraph | null = null
  summary: StateSummary | null = null
  helper: HelperResponse | null = null
  rejection: Decision | null = null
  firedEdge: FiredEdge | null = null
  connection: ConnectionStatus = 'idle'

  /** Highlight source of truth: the latest state_entered event received. */
  activeState: string | null = null
  activeWorkflow: string | null = null

  events: SessionEvent[] = []
  private listeners: (() => void)[] = []

  onChange(listener: () => void): void {
    this.listeners.push(listener)
  }

  private notify(): void {
    for (const listener of this.listeners) listener()
  }

  firstBufferedSeq(): number {
    return this.events.length > 0 ? this.events[0].seq : 0
  }

  lastSeq(): number {
    return this.events.length > 0 ? this.events[this.events.length - 1].seq : 0
  }

  setCatalog(catalog: WorkflowSummary[]): void {
    this.catalog = catalog
    this.notify()
  }

  setGraph(graph: WorkflowGraph): void {
    this.graph = graph
    this.notify()
  }

  setConnection(status: ConnectionStatus): void {
    this.connection = status
    this.notify()
  }

  setSummary(summary: StateSummary): void {
    this.summary = summary
    this.notify()
  }

  setHelper(helper: HelperResponse): void {
    this.helper = helper
    this.notify()
  }

  setDecision(decision: Decision): void {
    this.rejection = decision.outcome === 'rejected' ? decision : null
    this.notify()
  }

  /** Prepend older events fetched via "load earlier"; keeps seq order. */
  prependEvents(older: SessionEvent[]): void {
    const first = this.firstBufferedSeq()
    const fresh = older.filter((e) => first === 0 || e.seq < first)
    this.events = [...fresh, ...this.events]
    this.notify()
  }

  applyEvent(event: SessionEvent): void {
    if (this.events.length > 0 && event.seq <= this.lastSeq()) return // dedup
    this.events.push(event)
    if (this.events.length > EVENT_FEED_CAP) {
      this.events = this.events.slice(this.events.length - EVENT_FEED_CAP)
    }
    if (event.type === 'state_entered') {
      this.activeState = String(event.payload.state)
      this.activeWorkflow = String(event.payload.workflow)
    } else if (event.type === 'transition_fired' && event.payload.kind === 'transition') {
      this.firedEdge = {
        trigger: String(event.payload.trigger),
        source: String(event.payload.source),
        destination: String(event.payload.destination),
      }
    } else if (event.type === 'session_ended' && this.summary) {
      this.summary = { ...this.summary, status: 'ended' }
    }
    this.notify()
  }

  /** Commands may be sent only to a live session over a live connection. */
  canSubmit(): boolean {
    return this.connection === 'live' && this.summary !== null && this.summary.status === 'live'
  }
}
