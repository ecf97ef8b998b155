// End-to-end console round-trip against the real orchestrator service,
// driven headlessly through the DOM (jsdom): submit "next state" in state
// Ready, watch the highlight move and the admissible commands update;
// submit gibberish, watch the ranked rejection panel render.

import { spawn, type ChildProcess } from 'node:child_process'
import { mkdtempSync, writeFileSync } from 'node:fs'
import net from 'node:net'
import os from 'node:os'
import path from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'
import WebSocket from 'ws'

import { mountConsole, type ConsoleApp } from '../src/main.js'
import type { WebSocketLike } from '../src/api.js'

const nodeFetch = globalThis.fetch.bind(globalThis)

let server: ChildProcess
let baseUrl: string
let wsUrl: string

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = net.createServer()
    probe.listen(0, '127.0.0.1', () => {
      const address = probe.address()
      if (address && typeof address === 'object') {
        const port = address.port
        probe.close(() => resolve(port))
      } else {
        reject(new Error('no port'))
      }
    })
  })
}

async function waitFor(predicate: () => boolean, timeoutMs = 10_000, what = 'condition'): Promise<void> {
  const started = Date.now()
  while (!predicate()) {
    if (Date.now() - started > timeoutMs) throw new Error(`timed out waiting for ${what}`)
    await new Promise((r) => setTimeout(r, 25))
  }
}

beforeAll(async () => {
  const port = await freePort()
  baseUrl = `http://127.0.0.1:${port}`
  wsUrl = `ws://127.0.0.1:${port}`
  const tmp = mkdtempSync(path.join(os.tmpdir(), 'console-test-'))
  const configPath = path.join(tmp, 'config.json')
  writeFileSync(
    configPath,
    JSON.stringify({ bind: `127.0.0.1:${port}`, log_dir: path.join(tmp, 'logs') }),
  )
  server = spawn('python3', ['-m', 'statebuddy', 'serve', '--config', configPath], {
    stdio: ['ignore', 'pipe', 'pipe'],
  })
  let stderr = ''
  server.stderr?.on('data', (chunk) => (stderr += String(chunk)))
  const started = Date.now()
  for (;;) {
    try {
      const response = await nodeFetch(`${baseUrl}/workflows`)
      if (response.ok) break
    } catch {
      // not up yet
    }
    if (Date.now() - started > 30_000) throw new Error(`service never came up: ${stderr}`)
    await new Promise((r) => setTimeout(r, 100))
  }
})

afterAll(() => {
  server?.kill('SIGTERM')
})

function mount(): ConsoleApp {
  document.body.innerHTML = '<div id="root"></div>'
  return mountConsole({
    container: document.getElementById('root') as HTMLElement,
    httpBaseUrl: baseUrl,
    wsBaseUrl: wsUrl,
    fetchFn: nodeFetch,
    makeWebSocket: (url) => new WebSocket(url) as unknown as WebSocketLike,
  })
}

function activeBox(): string | null {
  return document.querySelector('.state-box.active')?.getAttribute('data-state') ?? null
}

function admissibleTriggers(): string[] {
  return [...document.querySelectorAll('[data-role="admissible"] [data-command]')].map(
    (node) => node.getAttribute('data-command') as string,
  )
}

describe('console round-trip against the live service', () => {
  it('renders the catalog as tabs', async () => {
    const app = mount()
    await app.start()
    const tabs = [...document.querySelectorAll('[data-workflow]')].map((t) => t.textContent)
    expect(tabs).toContain('Components')
    expect(tabs).toContain('Part Program Generator')
    app.stop()
  })

  it('moves the highlight and updates commands after "next state"', async () => {
    const app = mount()
    await app.start()
    await app.openWorkflow('components')
    await waitFor(() => activeBox() === 'Ready', 10_000, 'Ready highlight')
    expect(admissibleTriggers().slice(0, 2)).toEqual(['NextState', 'BackState'])

    const input = document.querySelector('[data-role="utterance-input"]') as HTMLInputElement
    const send = document.querySelector('[data-role="utterance-send"]') as HTMLButtonElement
    expect(input.disabled).toBe(false)
    input.value = 'next state'
    send.click()

    // one event cycle: the state_entered event re-highlights; NextState in
    // Components calls the Preview child, so the highlight lands on Idle
    await waitFor(() => activeBox() === 'Idle', 10_000, 'highlight move')
    await waitFor(() => admissibleTriggers()[0] === 'OpenStudio', 10_000, 'command list update')
    expect(document.querySelector('[data-role="rejection"]')?.classList.contains('hidden')).toBe(true)
    app.stop()
  })

  it('renders the ranked score list on rejection', async () => {
    const app = mount()
    await app.start()
    await app.openWorkflow('components')
    await waitFor(() => activeBox() === 'Ready', 10_000, 'Ready highlight')

    const input = document.querySelector('[data-role="utterance-input"]') as HTMLInputElement
    const send = document.querySelector('[data-role="utterance-send"]') as HTMLButtonElement
    input.value = 'please purge the flux capacitor'
    send.click()

    await waitFor(
      () => document.querySelectorAll('[data-role="ranking"] li').length > 0,
      10_000,
      'rejection panel',
    )
    const entries = [...document.querySelectorAll('[data-role="ranking"] li')]
    expect(entries.length).toBeGreaterThanOrEqual(2)
    expect(entries[0].textContent).toMatch(/d_lev=\d+ d_jac=\d+\.\d{3} s_cos=-?\d+\.\d{3}/)
    const ranked = entries.map((li) => li.getAttribute('data-candidate'))
    expect(ranked).toContain('NextState')
    expect(ranked).toContain('BackState')
    // the state did not move
    expect(activeBox()).toBe('Ready')
    app.stop()
  })

  it('direct transition clicks fire through the transitions endpoint', async () => {
    const app = mount()
    await app.start()
    await app.openWorkflow('preview')
    await waitFor(() => activeBox() === 'Idle', 10_000, 'Idle highlight')
    const edge = document.querySelector('[data-trigger="OpenStudio"]') as HTMLButtonElement
    edge.click()
    await waitFor(() => activeBox() === 'StudioOpen', 10_000, 'direct fire highlight')
    app.stop()
  })

  it('reload + replay from seq 0 reproduces the same view', async () => {
    const first = mount()
    await first.start()
    await first.openWorkflow('components')
    await waitFor(() => activeBox() === 'Ready', 10_000, 'Ready highlight')
    const input = document.querySelector('[data-role="utterance-input"]') as HTMLInputElement
    const send = document.querySelector('[data-role="utterance-send"]') as HTMLButtonElement
    input.value = 'next state'
    send.click()
    await waitFor(() => activeBox() === 'Idle', 10_000, 'highlight move')
    const sessionId = first.vm.summary?.session_id as string
    const before = {
      active: activeBox(),
      commands: admissibleTriggers(),
      eventCount: first.vm.events.length,
    }
    first.stop()

    // a fresh mount (page reload) attaching to the same session
    const second = mount()
    await second.start()
    await second.attachSession(sessionId)
    await waitFor(() => second.vm.events.length >= before.eventCount, 10_000, 'event replay')
    expect(activeBox()).toBe(before.active)
    expect(admissibleTriggers()).toEqual(before.commands)
    expect(second.vm.events.map((e) => e.seq)).toEqual(
      Array.from({ length: second.vm.events.length }, (_, i) => i + 1),
    )
    second.stop()
  })

  it('helper panel shows state-keyed documents with controls', async () => {
    const app = mount()
    await app.start()
    await app.openWorkflow('components')
    await waitFor(() => activeBox() === 'Ready', 10_000, 'Ready highlight')
    await waitFor(
      () => document.querySelector('[data-role="helper-doc"]')?.getAttribute('data-doc') === 'Ready.md',
      10_000,
      'helper doc',
    )
    const detail = document.querySelector('[data-helper="Detail"]') as HTMLButtonElement
    detail.click()
    await waitFor(
      () => (document.querySelector('.helper-head')?.textContent ?? '').includes('detail'),
      10_000,
      'detail mode',
    )
    app.stop()
  })
})
