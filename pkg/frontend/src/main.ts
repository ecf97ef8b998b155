// Console wiring: REST + event stream in, view model projection out.

import { ApiClient, EventStream, fetchEventRange, type FetchLike, type WebSocketFactory } from './api.js'
import { ConsoleViewModel, EVENT_FEED_CAP } from './model.js'
import type { UtteranceResponse } from './types.js'
import { ConsoleView } from './view.js'

export interface ConsoleOptions {
  container: HTMLElement
  httpBaseUrl: string
  wsBaseUrl: string
  fetchFn?: FetchLike
  makeWebSocket?: WebSocketFactory
}

export class ConsoleApp {
  readonly vm = new ConsoleViewModel()
  readonly api: ApiClient
  private stream: EventStream | null = null
  private makeWebSocket: WebSocketFactory
  private wsBaseUrl: string
  private sessionId: string | null = null

  constructor(private options: ConsoleOptions) {
    this.api = new ApiClient(options.httpBaseUrl, options.fetchFn)
    this.makeWebSocket = options.makeWebSocket ?? ((url) => new WebSocket(url) as never)
    this.wsBaseUrl = options.wsBaseUrl
    new ConsoleView(options.container, this.vm, {
      onSelectWorkflow: (id) => void this.openWorkflow(id),
      onSubmitUtterance: (text) => void this.submitUtterance(text),
      onFireTrigger: (trigger) => void this.fireTrigger(trigger),
      onHelperCommand: (trigger) => void this.fireTrigger(trigger),
      onToggleAutopilot: (enabled) => void this.toggleAutopilot(enabled),
      onLoadEarlier: () => void this.loadEarlier(),
    })
  }

  async start(): Promise<void> {
    const { workflows } = await this.api.listWorkflows()
    this.vm.setCatalog(workflows)
  }

  /** Open a tab: load the graph, start a session, subscribe to its events. */
  async openWorkflow(workflowId: string): Promise<void> {
    this.vm.setGraph(await this.api.getWorkflow(workflowId))
    const envelope = await this.api.createSession(workflowId)
    this.subscribe(envelope.session.session_id, envelope.state)
    await this.refreshHelper()
  }

  /** Re-attach to an existing session (page reload): replaying its events
   * from seq 0 reproduces the same view. */
  async attachSession(sessionId: string): Promise<void> {
    const envelope = await this.api.getSession(sessionId)
    this.vm.setGraph(await this.api.getWorkflow(envelope.state.active_workflow))
    this.subscribe(sessionId, envelope.state)
    await this.refreshHelper()
  }

  private subscribe(sessionId: string, state: UtteranceResponse['state']): void {
    this.stream?.close()
    this.sessionId = sessionId
    this.vm.setSummary(state)
    this.stream = new EventStream({
      wsBaseUrl: this.wsBaseUrl,
      sessionId,
      makeWebSocket: this.makeWebSocket,
      onEvent: (event) => {
        this.vm.applyEvent(event)
        if (event.type === 'state_entered') void this.followActiveWorkflow()
      },
      onStatus: (status) => this.vm.setConnection(status),
    })
    this.stream.connect(0)
  }

  /** Nested calls move the active frame to a child workflow; keep the
   * displayed graph in step with the highlight. */
  private async followActiveWorkflow(): Promise<void> {
    const active = this.vm.activeWorkflow
    if (active && this.vm.graph && active !== this.vm.graph.id) {
      this.vm.setGraph(await this.api.getWorkflow(active))
    }
    await this.refreshHelper()
  }

  private async refreshHelper(): Promise<void> {
    if (!this.sessionId) return
    try {
      this.vm.setHelper(await this.api.getHelper(this.sessionId))
    } catch {
      // helper content is optional; leave the panel as-is
    }
  }

  async submitUtterance(text: string): Promise<void> {
    if (!this.sessionId || !this.vm.canSubmit()) return
    const response = await this.api.submitUtterance(this.sessionId, text)
    this.vm.setDecision(response.decision)
    this.vm.setSummary(response.state)
    await this.refreshHelper()
  }

  async fireTrigger(trigger: string): Promise<void> {
    if (!this.sessionId || !this.vm.canSubmit()) return
    try {
      const response = await this.api.fireTransition(this.sessionId, trigger)
      this.vm.setSummary(response.state)
    } catch {
      // inadmissible or guarded: the service refused; state is unchanged
      const envelope = await this.api.getSession(this.sessionId)
      this.vm.setSummary(envelope.state)
    }
    await this.refreshHelper()
  }

  async toggleAutopilot(enabled: boolean): Promise<void> {
    if (!this.sessionId || !this.vm.canSubmit()) return
    const response = await this.api.setAutopilot(this.sessionId, enabled)
    this.vm.setSummary(response.state)
  }

  async loadEarlier(): Promise<void> {
    if (!this.sessionId) return
    const first = this.vm.firstBufferedSeq()
    if (first <= 1) return
    const fromSeq = Math.max(0, first - 1 - EVENT_FEED_CAP)
    const older = await fetchEventRange(
      this.wsBaseUrl,
      this.sessionId,
      this.makeWebSocket,
      fromSeq,
      first - 1,
    )
    this.vm.prependEvents(older)
  }

  stop(): void {
    this.stream?.close()
  }
}

export function mountConsole(options: ConsoleOptions): ConsoleApp {
  return new ConsoleApp(options)
}

declare global {
  interface Window {
    statebuddyConsole?: ConsoleApp
  }
}

// Browser entry point: mount on #app against the serving origin.
if (typeof document !== 'undefined' && document.getElementById('app')) {
  const http = window.location.origin
  const ws = http.replace(/^http/, 'ws')
  const app = mountConsole({
    container: document.getElementById('app') as HTMLElement,
    httpBaseUrl: http,
    wsBaseUrl: ws,
  })
  window.statebuddyConsole = app
  void app.start()
}
