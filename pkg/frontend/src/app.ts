// DOM glue: wires the upload form, slice canvases, seed interactions,
// config panel, and the polling loop together.

import { ServiceClient, templateCornerOffsets } from './protocol.js';
import type { ResultDoc, SessionConfig } from './protocol.js';
import { SliceTransform } from './transform.js';
import { SeedDragQueue } from './mutator.js';
import { ResultPoller } from './poller.js';
import { applyResult, applySeeds, emptyViewState, nearestHandle } from './state.js';
import type { SeedHandle, ViewState } from './state.js';
import { renderOverlay } from './overlay.js';

const VIEW_SIZE = 420;

interface SliceView {
  axis: number;
  canvas: HTMLCanvasElement;
  transform: SliceTransform | null;
  image: HTMLImageElement | null;
  slider: HTMLInputElement | null;
}

export class App {
  private client: ServiceClient;
  private state: ViewState = emptyViewState();
  private views: SliceView[] = [];
  private dragQueues = new Map<string, SeedDragQueue>();
  private dragging: { handle: SeedHandle; view: SliceView } | null = null;
  private poller: ResultPoller | null = null;

  constructor(private root: HTMLElement, baseUrl: string) {
    this.client = new ServiceClient(baseUrl);
    this.buildDom();
  }

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    cls?: string,
    parent?: HTMLElement,
  ): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (cls) node.className = cls;
    (parent ?? this.root).appendChild(node);
    return node;
  }

  private buildDom(): void {
    const bar = this.el('div', 'topbar');
    const file = this.el('input', 'file', bar);
    file.type = 'file';
    file.accept = '.pgm,.png,.mhd';
    file.id = 'file-input';
    file.addEventListener('change', () => {
      const f = file.files?.[0];
      if (f) void this.upload(f);
    });

    const status = this.el('span', 'status', bar);
    status.id = 'status';
    status.textContent = 'load an image to start';
    const latency = this.el('span', 'latency', bar);
    latency.id = 'latency';
    const banner = this.el('div', 'banner hidden');
    banner.id = 'offline-banner';
    banner.textContent = 'connection lost; retrying (seeds stay editable)';

    this.el('div', 'views').id = 'views';
    this.buildConfigPanel();
    const hint = this.el('div', 'hint');
    hint.textContent =
      'click: place/drag the primary seed (green) - shift-click: add a ' +
      'refinement seed (white) - drag any handle - double-click a ' +
      'refinement to delete it - wheel: zoom';
  }

  private buildConfigPanel(): void {
    const panel = this.el('div', 'config');
    panel.id = 'config-panel';
    const fields: [string, string, number][] = [
      ['delta', 'delta', 2],
      ['rays', 'rays', 30],
      ['nodes', 'nodes per ray', 30],
      ['mean-radius', 'mean radius mm', 4],
    ];
    for (const [id, label, value] of fields) {
      const wrap = this.el('label', 'cfg-field', panel);
      wrap.textContent = label + ' ';
      const input = this.el('input', '', wrap);
      input.id = `cfg-${id}`;
      input.type = 'number';
      input.value = String(value);
      input.addEventListener('change', () => void this.pushConfig());
    }
    const msg = this.el('span', 'cfg-msg', panel);
    msg.id = 'cfg-msg';
  }

  private cfgValue(id: string): number {
    return Number((document.getElementById(`cfg-${id}`) as HTMLInputElement).value);
  }

  private readConfig(): SessionConfig | null {
    const delta = this.cfgValue('delta');
    const nodes = this.cfgValue('nodes');
    const msg = document.getElementById('cfg-msg')!;
    if (delta < 0 || delta > nodes - 1) {
      msg.textContent = `delta must be in [0, ${nodes - 1}]`;
      return null;
    }
    msg.textContent = '';
    const rays = this.cfgValue('rays');
    return {
      delta,
      rays: this.state.ndim === 3 ? [Math.max(2, Math.round(rays / 16)), 16] : rays,
      nodes_per_ray: nodes,
      mean_radius_mm: this.cfgValue('mean-radius'),
    };
  }

  private async pushConfig(): Promise<void> {
    const sid = this.state.sessionId;
    const config = this.readConfig();
    if (!sid || !config) return;
    try {
      const resp = await this.client.patchConfig(sid, config);
      this.state.latestSentRevision = resp.revision;
      this.setOffline(false);
      this.poller?.kick();
    } catch (err) {
      this.handleNetError(err);
    }
  }

  private async upload(file: File): Promise<void> {
    const buf = new Uint8Array(await file.arrayBuffer());
    let b64 = '';
    for (let i = 0; i < buf.length; i += 0x8000) {
      b64 += String.fromCharCode(...buf.subarray(i, i + 0x8000));
    }
    b64 = btoa(b64);
    const ext = file.name.toLowerCase().split('.').pop();
    const format = ext === 'png' ? 'png-gray' : ext === 'mhd' ? 'mhd-raw' : 'pgm';
    const config = this.readConfig() ?? { delta: 2, rays: 30, nodes_per_ray: 30, mean_radius_mm: 4 };
    try {
      const created = await this.client.createSession(b64, format, config);
      await this.attachSession(created.id);
    } catch (err) {
      this.handleNetError(err);
    }
  }

  private async attachSession(sid: string): Promise<void> {
    const info = await this.client.getState(sid);
    this.state = emptyViewState();
    this.state.sessionId = sid;
    this.state.dims = info.dims;
    this.state.spacing = info.spacing;
    this.state.origin = info.origin;
    this.state.ndim = info.dims.length;
    this.state.cornerOffsets = templateCornerOffsets(info.template);
    this.state.sliceIndices = info.dims.map((d) => Math.floor(d / 2));
    applySeeds(this.state, info.seeds.primary, info.seeds.refinements);
    this.buildViews();
    document.getElementById('status')!.textContent =
      `session ${sid} - ${info.dims.join('x')}`;
    this.poller?.stop();
    this.poller = new ResultPoller(
      () => this.client.getResult(sid),
      (doc) => this.onResult(doc),
    );
    this.poller.kick();
  }

  private buildViews(): void {
    const container = document.getElementById('views')!;
    container.textContent = '';
    this.views = [];
    const axes = this.state.ndim === 3 ? [2, 1, 0] : [2];
    for (const axis of axes) {
      const wrap = document.createElement('div');
      wrap.className = 'view';
      const canvas = document.createElement('canvas');
      canvas.width = VIEW_SIZE;
      canvas.height = VIEW_SIZE;
      wrap.appendChild(canvas);
      let slider: HTMLInputElement | null = null;
      if (this.state.ndim === 3) {
        slider = document.createElement('input');
        slider.type = 'range';
        slider.min = '0';
        slider.max = String(this.state.dims[axis] - 1);
        slider.value = String(this.state.sliceIndices[axis]);
        wrap.appendChild(slider);
      }
      container.appendChild(wrap);
      const view: SliceView = { axis, canvas, transform: null, image: null, slider };
      this.setupView(view);
      this.views.push(view);
      slider?.addEventListener('input', () => {
        this.state.sliceIndices[view.axis] = Number(slider!.value);
        void this.refreshView(view);
      });
    }
    for (const view of this.views) void this.refreshView(view);
  }

  private viewAxes(axis: number): [number, number] {
    if (this.state.ndim === 2) return [0, 1];
    const pair = [0, 1, 2].filter((a) => a !== axis);
    return [pair[0], pair[1]] as [number, number];
  }

  private setupView(view: SliceView): void {
    view.transform = SliceTransform.fit(
      {
        axes: this.viewAxes(view.axis),
        origin: this.state.origin,
        spacing: this.state.spacing,
        dims: this.state.dims,
      },
      view.canvas.width,
      view.canvas.height,
    );
    view.canvas.addEventListener('mousedown', (ev) => this.onPointerDown(view, ev));
    view.canvas.addEventListener('mousemove', (ev) => this.onPointerMove(view, ev));
    window.addEventListener('mouseup', () => (this.dragging = null));
    view.canvas.addEventListener('dblclick', (ev) => void this.onDoubleClick(view, ev));
    view.canvas.addEventListener('wheel', (ev) => {
      ev.preventDefault();
      const pivot = this.eventScreen(view, ev);
      view.transform!.zoomAt(ev.deltaY < 0 ? 1.15 : 1 / 1.15, pivot);
      this.paint(view);
    });
  }

  private eventScreen(view: SliceView, ev: MouseEvent): [number, number] {
    const rect = view.canvas.getBoundingClientRect();
    return [ev.clientX - rect.left, ev.clientY - rect.top];
  }

  private sliceIndexFor(view: SliceView): number {
    return this.state.ndim === 3 ? this.state.sliceIndices[view.axis] : 0;
  }

  private onPointerDown(view: SliceView, ev: MouseEvent): void {
    const sid = this.state.sessionId;
    if (!sid || !view.transform) return;
    const screen = this.eventScreen(view, ev);
    const world = view.transform.toWorldMm(screen, this.sliceIndexFor(view));
    const grab = nearestHandle(
      this.state,
      view.transform.toPlaneMm(screen),
      (mm) => view.transform!.toScreen(view.transform!.planeOf(mm)),
      screen,
      12,
    );
    if (ev.shiftKey) {
      void this.addRefinement(world);
      return;
    }
    if (grab) {
      this.dragging = { handle: grab, view };
      return;
    }
    // fresh click: place or move the primary seed
    if (this.state.primary) {
      this.state.primary.positionMm = world;
      this.queueFor('primary').push(world);
    } else {
      void this.setPrimary(world);
    }
    this.paintAll();
  }

  private onPointerMove(view: SliceView, ev: MouseEvent): void {
    if (!this.dragging || this.dragging.view !== view || !view.transform) return;
    const world = view.transform.toWorldMm(
      this.eventScreen(view, ev),
      this.sliceIndexFor(view),
    );
    this.dragging.handle.positionMm = world;
    this.queueFor(this.dragging.handle.id).push(world);
    this.paintAll();
  }

  private async onDoubleClick(view: SliceView, ev: MouseEvent): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid || !view.transform) return;
    const screen = this.eventScreen(view, ev);
    const grab = nearestHandle(
      this.state,
      view.transform.toPlaneMm(screen),
      (mm) => view.transform!.toScreen(view.transform!.planeOf(mm)),
      screen,
      12,
    );
    if (grab && grab.id !== 'primary') {
      try {
        const resp = await this.client.deleteSeed(sid, grab.id);
        this.state.latestSentRevision = resp.revision;
        this.state.refinements = this.state.refinements.filter((s) => s.id !== grab.id);
        this.dragQueues.delete(grab.id);
        this.paintAll();
        this.poller?.kick();
      } catch (err) {
        this.handleNetError(err);
      }
    }
  }

  private queueFor(seedId: string): SeedDragQueue {
    let queue = this.dragQueues.get(seedId);
    if (!queue) {
      queue = new SeedDragQueue(async (positionMm) => {
        const sid = this.state.sessionId!;
        return seedId === 'primary'
          ? this.client.moveSeed(sid, 'primary', positionMm)
          : this.client.moveSeed(sid, seedId, positionMm);
      });
      queue.onRevision = (revision) => {
        this.state.latestSentRevision = Math.max(this.state.latestSentRevision, revision);
        this.poller?.kick();
      };
      queue.onOffline = (offline) => this.setOffline(offline);
      this.dragQueues.set(seedId, queue);
    }
    return queue;
  }

  private async setPrimary(world: number[]): Promise<void> {
    const sid = this.state.sessionId!;
    try {
      const resp = await this.client.postSeed(sid, 'primary', world);
      this.state.latestSentRevision = resp.revision;
      this.state.primary = { id: 'primary', positionMm: world };
      this.setOffline(false);
      this.paintAll();
      this.poller?.kick();
    } catch (err) {
      this.handleNetError(err);
    }
  }

  private async addRefinement(world: number[]): Promise<void> {
    const sid = this.state.sessionId!;
    try {
      const resp = await this.client.postSeed(sid, 'refine', world);
      this.state.latestSentRevision = resp.revision;
      this.state.refinements.push({ id: resp.seed_id, positionMm: world });
      this.setOffline(false);
      this.paintAll();
      this.poller?.kick();
    } catch (err) {
      this.handleNetError(err);
    }
  }

  private onResult(doc: ResultDoc): void {
    this.setOffline(false);
    const updated = applyResult(this.state, doc);
    const latency = document.getElementById('latency')!;
    if (this.state.latencyMs !== null) {
      latency.textContent =
        `rev ${this.state.shownRevision}` +
        (this.state.stale ? ' (stale)' : '') +
        ` - ${this.state.latencyMs.toFixed(1)} ms`;
    }
    if (this.state.error) {
      document.getElementById('status')!.textContent = `error: ${this.state.error}`;
    }
    if (updated && this.state.ndim === 3) {
      for (const view of this.views) void this.refreshOutlines(view);
    }
    if (updated) this.paintAll();
  }

  private async refreshOutlines(view: SliceView): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    try {
      const doc = await this.client.getResultOutlines(
        sid,
        view.axis,
        this.sliceIndexFor(view),
      );
      this.state.outlinesByAxis[view.axis] = doc.outlines;
      this.paint(view);
    } catch {
      // outline fetch is cosmetic; polling will retry
    }
  }

  private async refreshView(view: SliceView): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    const img = new Image();
    img.src = this.client.imageSliceUrl(sid, view.axis, this.sliceIndexFor(view));
    img.onload = () => {
      view.image = img;
      this.paint(view);
    };
    if (this.state.ndim === 3) await this.refreshOutlines(view);
  }

  private paintAll(): void {
    for (const view of this.views) this.paint(view);
  }

  private paint(view: SliceView): void {
    const ctx = view.canvas.getContext('2d');
    if (!ctx || !view.transform) return;
    ctx.clearRect(0, 0, view.canvas.width, view.canvas.height);
    if (view.image) {
      // image pixel (i, j) covers voxel centers; align via the transform
      const geom = view.transform.geometry;
      const [a0, a1] = geom.axes;
      const tl = view.transform.toScreen([
        geom.origin[a0] - geom.spacing[a0] / 2,
        geom.origin[a1] - geom.spacing[a1] / 2,
      ]);
      const wPx = geom.dims[a0] * geom.spacing[a0] * view.transform.zoom;
      const hPx = geom.dims[a1] * geom.spacing[a1] * view.transform.zoom;
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(view.image, tl[0], tl[1], wPx, hPx);
    }
    renderOverlay(ctx, this.state, view.transform, view.axis);
    if (this.state.stale) {
      ctx.fillStyle = 'rgba(255, 193, 7, 0.9)';
      ctx.beginPath();
      ctx.arc(view.canvas.width - 14, 14, 6, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  private setOffline(offline: boolean): void {
    this.state.offline = offline;
    document.getElementById('offline-banner')!.classList.toggle('hidden', !offline);
  }

  private handleNetError(err: unknown): void {
    this.setOffline(true);
    document.getElementById('status')!.textContent = `error: ${String(err)}`;
  }
}
