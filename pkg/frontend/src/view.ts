// DOM rendering: workflow strip (states left-to-right, active box
// highlighted), labeled transition edges, jump strip, utterance bar,
// rejection panel, helper panel and the capped event feed.

import type { ConsoleViewModel } from './model.js'
import type { AdmissibleCommand, RankedCandidate, SessionEvent } from './types.js'

export interface ViewCallbacks {
  onSelectWorkflow: (id: string) => void
  onSubmitUtterance: (text: string) => void
  onFireTrigger: (trigger: string) => void
  onHelperCommand: (trigger: 'NextSlide' | 'PreviousSlide' | 'Ok' | 'Skip' | 'Detail') => void
  onToggleAutopilot: (enabled: boolean) => void
  onLoadEarlier: () => void
}

function el(tag: string, attrs: Record<string, string> = {}, text?: string): HTMLElement {
  const node = document.createElement(tag)
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value)
  if (text !== undefined) node.textContent = text
  return node
}

export class ConsoleView {
  private root: HTMLElement

  constructor(container: HTMLElement, private vm: ConsoleViewModel, private callbacks: ViewCallbacks) {
    this.root = container
    vm.onChange(() => this.render())
    this.render()
  }

  render(): void {
    const vm = this.vm
    this.root.textContent = ''
    this.root.append(
      this.renderBanner(),
      this.renderTabs(),
      this.renderWorkflowView(),
      this.renderCommandBar(),
      this.renderRejectionPanel(),
      this.renderHelperPanel(),
      this.renderEventFeed(),
    )
  }

  private renderBanner(): HTMLElement {
    const vm = this.vm
    const banner = el('div', { 'data-role': 'connection', class: `banner ${vm.connection}` })
    if (vm.connection === 'lost') {
      banner.textContent = 'connection lost — reconnecting…'
    } else if (vm.connection === 'connecting') {
      banner.textContent = 'connecting…'
    } else {
      banner.classList.add('hidden')
    }
    return banner
  }

  private renderTabs(): HTMLElement {
    const tabs = el('nav', { 'data-role': 'tabs', class: 'tabs' })
    for (const workflow of this.vm.catalog) {
      const title = workflow.metadata.title ?? workflow.id
      const tab = el('button', { 'data-workflow': workflow.id, class: 'tab' }, title)
      if (this.vm.graph?.id === workflow.id) tab.classList.add('selected')
      tab.addEventListener('click', () => this.callbacks.onSelectWorkflow(workflow.id))
      tabs.append(tab)
    }
    return tabs
  }

  private renderWorkflowView(): HTMLElement {
    const vm = this.vm
    const container = el('section', { 'data-role': 'workflow', class: 'workflow' })
    const graph = vm.graph
    if (!graph) {
      container.append(el('p', { class: 'empty' }, 'pick a workflow tab'))
      return container
    }
    try {
      const strip = el('div', { 'data-role': 'state-strip', class: 'state-strip' })
      for (const state of graph.states) {
        const box = el('div', { 'data-state': state.id, class: 'state-box' })
        box.append(el('span', { class: 'state-label' }, state.human_label))
        if (state.terminal) box.classList.add('terminal')
        if (state.requires_confirmation) box.classList.add('confirm')
        // highlight strictly follows the last state_entered event
        if (
          vm.activeState === state.id &&
          (vm.activeWorkflow === null || vm.activeWorkflow === graph.id)
        ) {
          box.classList.add('active')
        }
        strip.append(box)
      }
      container.append(strip)

      const edges = el('div', { 'data-role': 'edges', class: 'edges' })
      for (const edge of graph.transitions) {
        const chip = el(
          'button',
          { 'data-trigger': edge.trigger, 'data-source': edge.source, class: 'edge' },
          `${edge.source} —${edge.trigger}→ ${edge.destination}`,
        )
        if (
          vm.firedEdge &&
          vm.firedEdge.trigger === edge.trigger &&
          vm.firedEdge.source === edge.source
        ) {
          chip.classList.add('fired')
        }
        chip.addEventListener('click', () => this.callbacks.onFireTrigger(edge.trigger))
        edges.append(chip)
      }
      container.append(edges)

      if (graph.jump_states.length > 0) {
        const jumps = el('div', { 'data-role': 'jump-strip', class: 'jump-strip' })
        for (const jump of graph.jump_states) {
          const node = el('button', { 'data-jump': jump.trigger, class: 'jump-box' }, jump.trigger)
          node.title = jump.description
          node.addEventListener('click', () => this.callbacks.onFireTrigger(jump.trigger))
          jumps.append(node)
        }
        container.append(jumps)
      }
    } catch (error) {
      // layout fallback: plain list view
      container.textContent = ''
      const list = el('ul', { 'data-role': 'state-list' })
      for (const state of graph.states) {
        const item = el('li', { 'data-state': state.id }, state.id)
        if (vm.activeState === state.id) item.classList.add('active')
        list.append(item)
      }
      container.append(list)
    }
    return container
  }

  private renderCommandBar(): HTMLElement {
    const vm = this.vm
    const bar = el('section', { 'data-role': 'command-bar', class: 'command-bar' })
    const label = el('label', { class: 'utterance-label' }, 'utterance')
    const input = el('input', {
      'data-role': 'utterance-input',
      type: 'text',
      placeholder: 'say a command, e.g. "next state"',
    }) as HTMLInputElement
    const send = el('button', { 'data-role': 'utterance-send' }, 'send') as HTMLButtonElement
    if (!vm.canSubmit()) {
      input.disabled = true
      send.disabled = true
    }
    const submit = () => {
      if (!vm.canSubmit() || input.value.trim() === '') return
      this.callbacks.onSubmitUtterance(input.value)
      input.value = ''
    }
    send.addEventListener('click', submit)
    input.addEventListener('keydown', (event) => {
      if ((event as KeyboardEvent).key === 'Enter') submit()
    })
    bar.append(label, input, send)

    if (vm.summary) {
      const commands = el('div', { 'data-role': 'admissible', class: 'admissible' })
      for (const command of vm.summary.admissible) {
        commands.append(this.renderCommandChip(command))
      }
      bar.append(commands)

      const autopilot = el(
        'button',
        { 'data-role': 'autopilot-toggle', class: vm.summary.autopilot_enabled ? 'on' : 'off' },
        vm.summary.autopilot_enabled ? 'autopilot: on' : 'autopilot: off',
      )
      autopilot.addEventListener('click', () =>
        this.callbacks.onToggleAutopilot(!this.vm.summary?.autopilot_enabled),
      )
      bar.append(autopilot)
    }
    return bar
  }

  private renderCommandChip(command: AdmissibleCommand): HTMLElement {
    const chip = el(
      'button',
      { 'data-command': command.trigger, class: `command ${command.kind}` },
      command.trigger,
    )
    chip.addEventListener('click', () => this.callbacks.onFireTrigger(command.trigger))
    return chip
  }

  private renderRejectionPanel(): HTMLElement {
    const panel = el('section', { 'data-role': 'rejection', class: 'rejection' })
    const rejection = this.vm.rejection
    if (!rejection) {
      panel.classList.add('hidden')
      return panel
    }
    panel.append(el('p', { class: 'rejection-title' }, 'no confident match — ranked candidates:'))
    const list = el('ol', { 'data-role': 'ranking' })
    rejection.ranking.forEach((candidate: RankedCandidate) => {
      list.append(
        el(
          'li',
          { 'data-candidate': candidate.trigger },
          `${candidate.trigger} · d_lev=${candidate.d_lev} d_jac=${candidate.d_jac.toFixed(3)} s_cos=${candidate.s_cos.toFixed(3)}`,
        ),
      )
    })
    panel.append(list)
    return panel
  }

  private renderHelperPanel(): HTMLElement {
    const panel = el('section', { 'data-role': 'helper', class: 'helper' })
    const helper = this.vm.helper
    if (!helper || helper.documents.length === 0) {
      panel.classList.add('hidden')
      return panel
    }
    const cursor = Math.min(helper.cursor, helper.documents.length - 1)
    const doc = helper.documents[cursor]
    panel.append(
      el('header', { class: 'helper-head' }, `${helper.state} · ${helper.mode} · ${cursor + 1}/${helper.documents.length}`),
      el('article', { 'data-role': 'helper-doc', 'data-doc': doc.key }, doc.content),
    )
    const controls = el('div', { class: 'helper-controls' })
    const buttons: [string, Parameters<ViewCallbacks['onHelperCommand']>[0]][] = [
      ['previous', 'PreviousSlide'],
      ['next', 'NextSlide'],
      ['ok', 'Ok'],
      ['skip', 'Skip'],
      ['detail', 'Detail'],
    ]
    for (const [label, trigger] of buttons) {
      const button = el('button', { 'data-helper': trigger }, label)
      button.addEventListener('click', () => this.callbacks.onHelperCommand(trigger))
      controls.append(button)
    }
    panel.append(controls)
    return panel
  }

  private renderEventFeed(): HTMLElement {
    const feed = el('section', { 'data-role': 'event-feed', class: 'event-feed' })
    const earlier = el('button', { 'data-role': 'load-earlier' }, 'load earlier')
    earlier.addEventListener('click', () => this.callbacks.onLoadEarlier())
    feed.append(earlier)
    const list = el('ul', { 'data-role': 'events' })
    for (const event of this.vm.events) {
      list.append(this.renderEvent(event))
    }
    feed.append(list)
    return feed
  }

  private renderEvent(event: SessionEvent): HTMLElement {
    const parts = [`#${event.seq}`, event.type]
    if (event.payload.state) parts.push(String(event.payload.state))
    if (event.payload.trigger) parts.push(String(event.payload.trigger))
    return el('li', { 'data-seq': String(event.seq), class: `event ${event.type}` }, parts.join(' '))
  }
}
