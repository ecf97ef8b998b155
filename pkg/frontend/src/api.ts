// REST client and event-stream subscription for the orchestrator service.
// fetch and the WebSocket constructor are injectable so the console runs
// unchanged in a browser and under a jsdom/node test harness.

import type {
  FireResponse,
  HelperResponse,
  SessionEnvelope,
  SessionEvent,
  UtteranceResponse,
  WorkflowGraph,
  WorkflowSummary,
} from './types.js'

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

export interface WebSocketLike {
  onopen: ((ev?: unknown) => void) | null
  onmessage: ((ev: { data: unknown }) => void) | null
  onclose: ((ev?: unknown) => void) | null
  onerror: ((ev?: unknown) => void) | null
  close(): void
}

export type WebSocketFactory = (url: string) => WebSocketLike

export class ApiError extends Error {
  constructor(public status: number, public body: unknown, message: string) {
    super(message)
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    })
    const payload = await response.json().catch(() => ({}))
    if (!response.ok) {
      const message =
        typeof payload === 'object' && payload !== null && 'message' in payload
          ? String((payload as { message: unknown }).message)
          : `${method} ${path} -> ${response.status}`
      throw new ApiError(response.status, payload, message)
    }
    return payload as T
  }

  listWorkflows(): Promise<{ workflows: WorkflowSummary[] }> {
    return this.request('GET', '/workflows')
  }

  getWorkflow(id: string): Promise<WorkflowGraph> {
    return this.request('GET', `/workflows/${encodeURIComponent(id)}`)
  }

  createSession(workflowId: string): Promise<SessionEnvelope> {
    return this.request('POST', '/sessions', { workflow_id: workflowId })
  }

  getSession(sessionId: string): Promise<SessionEnvelope> {
    return this.request('GET', `/sessions/${encodeURIComponent(sessionId)}`)
  }

  submitUtterance(sessionId: string, utterance: string): Promise<UtteranceResponse> {
    return this.request('POST', `/sessions/${encodeURIComponent(sessionId)}/utterance`, { utterance })
  }

  fireTransition(sessionId: string, trigger: string): Promise<FireResponse> {
    return this.request(
      'POST',
      `/sessions/${encodeURIComponent(sessionId)}/transitions/${encodeURIComponent(trigger)}`,
    )
  }

  setAutopilot(sessionId: string, enabled: boolean): Promise<FireResponse> {
    return this.request('POST', `/sessions/${encodeURIComponent(sessionId)}/autopilot`, { enabled })
  }

  getHelper(sessionId: string, mode?: string): Promise<HelperResponse> {
    const query = mode ? `?mode=${encodeURIComponent(mode)}` : ''
    return this.request('GET', `/sessions/${encodeURIComponent(sessionId)}/helper${query}`)
  }
}

export interface EventStreamOptions {
  wsBaseUrl: string
  sessionId: string
  makeWebSocket: WebSocketFactory
  onEvent: (event: SessionEvent) => void
  onStatus: (status: 'connecting' | 'live' | 'lost') => void
  reconnectDelayMs?: number
}

/** One WebSocket subscription per open session; reconnects from the last
 * seen seq so no events are lost or duplicated. */
export class EventStream {
  private socket: WebSocketLike | null = null
  private lastSeq = 0
  private closed = false
  private timer: ReturnType<typeof setTimeout> | null = null

  constructor(private options: EventStreamOptions) {}

  connect(fromSeq = 0): void {
    this.lastSeq = fromSeq
    this.open()
  }

  private open(): void {
    if (this.closed) return
    this.options.onStatus('connecting')
    const url = `${this.options.wsBaseUrl}/sessions/${encodeURIComponent(this.options.sessionId)}/events?from_seq=${this.lastSeq}`
    const socket = this.options.makeWebSocket(url)
    this.socket = socket
    socket.onopen = () => this.options.onStatus('live')
    socket.onmessage = (message) => {
      const event = JSON.parse(String(message.data)) as SessionEvent
      if (event.seq <= this.lastSeq) return // at-least-once delivery: dedup by seq
      this.lastSeq = event.seq
      this.options.onEvent(event)
    }
    socket.onerror = () => undefined
    socket.onclose = () => {
      this.socket = null
      if (this.closed) return
      this.options.onStatus('lost')
      this.timer = setTimeout(() => this.open(), this.options.reconnectDelayMs ?? 1000)
    }
  }

  close(): void {
    this.closed = true
    if (this.timer !== null) clearTimeout(this.timer)
    this.socket?.close()
  }
}

/** One-shot replay of a seq range over a temporary socket (the "load
 * earlier" path for the event feed). */
export function fetchEventRange(
  wsBaseUrl: string,
  sessionId: string,
  makeWebSocket: WebSocketFactory,
  fromSeq: number,
  toSeq: number,
  timeoutMs = 5000,
): Promise<SessionEvent[]> {
  return new Promise((resolve, reject) => {
    const url = `${wsBaseUrl}/sessions/${encodeURIComponent(sessionId)}/events?from_seq=${fromSeq}`
    const socket = makeWebSocket(url)
    const collected: SessionEvent[] = []
    const timer = setTimeout(() => {
      socket.close()
      reject(new Error('timed out fetching event range'))
    }, timeoutMs)
    const finish = () => {
      clearTimeout(timer)
      socket.close()
      resolve(collected)
    }
    socket.onmessage = (message) => {
      const event = JSON.parse(String(message.data)) as SessionEvent
      if (event.seq > toSeq) {
        finish()
        return
      }
      collected.push(event)
      if (event.seq === toSeq) finish()
    }
    socket.onerror = () => {
      clearTimeout(timer)
      reject(new Error('event range socket failed'))
    }
    socket.onclose = () => finish()
  })
}
