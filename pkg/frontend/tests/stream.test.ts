import { describe, expect, it, vi } from 'vitest'

import { EventStream, type WebSocketLike } from '../src/api.js'
import type { SessionEvent } from '../src/types.js'

class FakeSocket implements WebSocketLike {
  onopen: ((ev?: unknown) => void) | null = null
  onmessage: ((ev: { data: unknown }) => void) | null = null
  onclose: ((ev?: unknown) => void) | null = null
  onerror: ((ev?: unknown) => void) | null = null
  closedByClient = false

  constructor(public url: string) {}

  open(): void {
    this.onopen?.()
  }

  push(event: Partial<SessionEvent> & { seq: number }): void {
    const full = { timestamp: 0, session_id: 's', type: 'state_entered', payload: {}, ...event }
    this.onmessage?.({ data: JSON.stringify(full) })
  }

  drop(): void {
    this.onclose?.()
  }

  close(): void {
    this.closedByClient = true
  }
}

describe('EventStream', () => {
  it('reconnects from the last seen seq and dedups overlap', async () => {
    vi.useFakeTimers()
    const sockets: FakeSocket[] = []
    const seen: number[] = []
    const statuses: string[] = []
    const stream = new EventStream({
      wsBaseUrl: 'ws://test',
      sessionId: 'sid',
      makeWebSocket: (url) => {
        const socket = new FakeSocket(url)
        sockets.push(socket)
        return socket
      },
      onEvent: (event) => seen.push(event.seq),
      onStatus: (status) => statuses.push(status),
      reconnectDelayMs: 10,
    })
    stream.connect(0)
    expect(sockets[0].url).toContain('from_seq=0')
    sockets[0].open()
    sockets[0].push({ seq: 1 })
    sockets[0].push({ seq: 2 })
    sockets[0].drop() // connection lost

    expect(statuses).toContain('lost')
    await vi.advanceTimersByTimeAsync(20)
    expect(sockets.length).toBe(2)
    expect(sockets[1].url).toContain('from_seq=2')
    sockets[1].open()
    sockets[1].push({ seq: 2 }) // overlap is ignored
    sockets[1].push({ seq: 3 })
    expect(seen).toEqual([1, 2, 3])
    stream.close()
    vi.useRealTimers()
  })

  it('close() stops reconnect attempts', async () => {
    vi.useFakeTimers()
    const sockets: FakeSocket[] = []
    const stream = new EventStream({
      wsBaseUrl: 'ws://test',
      sessionId: 'sid',
      makeWebSocket: (url) => {
        const socket = new FakeSocket(url)
        sockets.push(socket)
        return socket
      },
      onEvent: () => undefined,
      onStatus: () => undefined,
      reconnectDelayMs: 5,
    })
    stream.connect(0)
    sockets[0].open()
    stream.close()
    sockets[0].drop()
    await vi.advanceTimersByTimeAsync(50)
    expect(sockets.length).toBe(1)
    vi.useRealTimers()
  })
})
