/**
 * Application wiring: frame list, click-to-annotate canvas, solve
 * trigger, and the reprojection review panel. All logic with testable
 * behavior lives in annotation.ts / review.ts / api.ts; this module only
 * connects them to the DOM.
 */

import { ApiClient, ApiError } from './api.js';
import { AnnotationDraft } from './annotation.js';
import { residualRows, runSolve, SolveError, worstFrame } from './review.js';
import { drawCornerMarkers, drawImage, drawOverlayPoints, drawResidualArrows } from './render.js';
import { toast } from './toast.js';
import type { FrameInfo, Overlay, SolveResult } from './types.js';

const TEMPLATE = `
  <div class="layout">
    <aside class="sidebar">
      <h1>panokit annotator</h1>
      <div id="sequence" class="muted"></div>
      <ul id="frame-list"></ul>
      <div class="controls">
        <label>camera <select id="camera"></select></label>
        <button id="solve" disabled>Solve selected</button>
        <div id="rms-badge" class="badge" hidden></div>
        <table id="residuals" hidden>
          <thead><tr><th>frame</th><th>rms px</th></tr></thead>
          <tbody></tbody>
        </table>
        <button id="worst" hidden>Re-annotate worst frame</button>
      </div>
    </aside>
    <main class="stage">
      <div class="toolbar">
        <span id="frame-title"></span>
        <span id="click-hint" class="muted"></span>
        <button id="undo">Undo click</button>
        <button id="save" disabled>Save corners</button>
        <label class="muted">points
          <input id="cap" type="range" min="100" max="5000" step="100" value="2000">
        </label>
      </div>
      <canvas id="canvas" width="640" height="480"></canvas>
    </main>
  </div>
`;

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

export async function createApp(root: HTMLElement, api: ApiClient): Promise<void> {
  root.innerHTML = TEMPLATE;
  const $ = <T extends HTMLElement>(sel: string) => root.querySelector(sel) as T;
  const canvas = $<HTMLCanvasElement>('#canvas');
  const ctx = canvas.getContext('2d')!;
  const frameList = $<HTMLUListElement>('#frame-list');
  const cameraSel = $<HTMLSelectElement>('#camera');
  const solveBtn = $<HTMLButtonElement>('#solve');
  const worstBtn = $<HTMLButtonElement>('#worst');
  const undoBtn = $<HTMLButtonElement>('#undo');
  const saveBtn = $<HTMLButtonElement>('#save');
  const capSlider = $<HTMLInputElement>('#cap');
  const badge = $<HTMLDivElement>('#rms-badge');
  const residualTable = $<HTMLTableElement>('#residuals');

  let frames: FrameInfo[] = [];
  const drafts = new Map<string, AnnotationDraft>();
  const images = new Map<string, HTMLImageElement>();
  const overlays = new Map<string, Overlay>();
  const selected = new Set<string>();
  let current: string | null = null;
  let solve: { jobId: string; result: SolveResult } | null = null;

  function frameInfo(fid: string): FrameInfo {
    return frames.find((f) => f.id === fid)!;
  }

  async function draft(fid: string): Promise<AnnotationDraft> {
    let d = drafts.get(fid);
    if (!d) {
      const info = frameInfo(fid);
      const ann = await api.getAnnotation(fid);
      d = new AnnotationDraft(fid, info.width, info.height, ann.corners, ann.revision);
      drafts.set(fid, d);
    }
    return d;
  }

  function renderFrameList(): void {
    frameList.innerHTML = '';
    for (const f of frames) {
      const li = document.createElement('li');
      li.className = f.id === current ? 'active' : '';
      const check = document.createElement('input');
      check.type = 'checkbox';
      check.checked = selected.has(f.id);
      check.onchange = () => {
        if (check.checked) selected.add(f.id);
        else selected.delete(f.id);
        refresh();
      };
      const name = document.createElement('a');
      const d = drafts.get(f.id);
      const annotated = d ? d.complete && !d.dirty : f.annotated;
      name.textContent = `${f.id} ${annotated ? '✓' : ''}`;
      name.href = '#';
      name.onclick = (ev) => {
        ev.preventDefault();
        void selectFrame(f.id);
      };
      li.append(check, name);
      frameList.appendChild(li);
    }
  }

  function renderReview(): void {
    if (!solve) {
      badge.hidden = true;
      residualTable.hidden = true;
      worstBtn.hidden = true;
      return;
    }
    const { result } = solve;
    badge.hidden = false;
    badge.textContent = `RMS ${result.rms.toFixed(3)} px`;
    badge.className = `badge ${result.rms < 1.0 ? 'badge-ok' : 'badge-warn'}`;
    const body = residualTable.tBodies[0];
    body.innerHTML = '';
    for (const row of residualRows(result)) {
      const tr = body.insertRow();
      tr.insertCell().textContent = row.frameId;
      tr.insertCell().textContent = row.rms.toFixed(4);
    }
    residualTable.hidden = false;
    worstBtn.hidden = false;
  }

  function refresh(): void {
    renderFrameList();
    renderReview();
    solveBtn.disabled = selected.size === 0;
    if (current === null) return;
    const d = drafts.get(current);
    drawImage(ctx, images.get(current) ?? null);
    const overlay = overlays.get(current);
    if (overlay) drawOverlayPoints(ctx, overlay);
    if (d) drawCornerMarkers(ctx, d.corners);
    if (overlay?.corners) drawResidualArrows(ctx, overlay.corners);
    $('#frame-title').textContent = current;
    const next = d?.nextLabel();
    $('#click-hint').textContent = d
      ? next
        ? `${d.corners.length}/4 corners, click ${next} next`
        : '4/4 corners placed'
      : '';
    undoBtn.disabled = !d || d.corners.length === 0;
    saveBtn.disabled = !d?.canSave;
  }

  async function fetchOverlay(fid: string): Promise<void> {
    if (!solve) return;
    try {
      const overlay = await api.getOverlay(
        fid, solve.jobId, cameraSel.value, Number(capSlider.value));
      overlays.set(fid, overlay);
    } catch (err) {
      toast((err as Error).message, 'error');
    }
  }

  async function selectFrame(fid: string): Promise<void> {
    current = fid;
    const info = frameInfo(fid);
    canvas.width = info.width;
    canvas.height = info.height;
    try {
      await draft(fid);
      if (!images.has(fid)) images.set(fid, await loadImage(api.imageUrl(fid)));
      if (solve && !overlays.has(fid)) await fetchOverlay(fid);
    } catch (err) {
      toast((err as Error).message, 'error');
    }
    refresh();
  }

  canvas.onclick = (ev) => {
    if (current === null) return;
    const d = drafts.get(current);
    if (!d) return;
    const rect = canvas.getBoundingClientRect();
    const u = (ev.clientX - rect.left) * (canvas.width / rect.width);
    const v = (ev.clientY - rect.top) * (canvas.height / rect.height);
    const res = d.addClick(u, v);
    if (!res.ok) toast(res.reason, 'error');
    refresh();
  };

  undoBtn.onclick = () => {
    const d = current ? drafts.get(current) : undefined;
    if (d && !d.undo()) toast('nothing to undo');
    refresh();
  };
  window.addEventListener('keydown', (ev) => {
    if (ev.key === 'Backspace' && current) {
      ev.preventDefault();
      undoBtn.click();
    }
  });

  saveBtn.onclick = async () => {
    if (current === null) return;
    const d = drafts.get(current);
    if (!d?.canSave) return;
    try {
      const res = await api.putAnnotation(current, d.corners, d.revision);
      d.markSaved(res.revision);
      if (res.conflict) {
        toast(`another session had changed ${current}; this save overwrote it `
          + `(now revision ${res.revision})`, 'error');
      } else {
        toast(`saved ${current} (revision ${res.revision})`);
      }
    } catch (err) {
      toast((err as Error).message, 'error');
    }
    refresh();
  };

  solveBtn.onclick = async () => {
    const ids = frames.map((f) => f.id).filter((fid) => selected.has(fid));
    solveBtn.disabled = true;
    solveBtn.textContent = 'Solving…';
    try {
      solve = await runSolve(api, ids, cameraSel.value);
      overlays.clear();
      if (current) await fetchOverlay(current);
      toast(`solve finished: RMS ${solve.result.rms.toFixed(3)} px`);
    } catch (err) {
      if (err instanceof SolveError || err instanceof ApiError) {
        toast(err.message, 'error');
      } else {
        throw err;
      }
    } finally {
      solveBtn.textContent = 'Solve selected';
    }
    refresh();
  };

  worstBtn.onclick = () => {
    if (!solve) return;
    const fid = worstFrame(solve.result);
    if (fid) void selectFrame(fid);
  };

  capSlider.onchange = async () => {
    overlays.clear();
    if (current) await fetchOverlay(current);
    refresh();
  };

  const listing = await api.listFrames();
  frames = listing.frames;
  $('#sequence').textContent =
    `${listing.sequence_id} · ${frames.length} frames`;
  cameraSel.innerHTML = '';
  for (const cam of listing.cameras) {
    const opt = document.createElement('option');
    opt.value = cam;
    opt.textContent = cam;
    cameraSel.appendChild(opt);
  }
  if (frames.length > 0) await selectFrame(frames[0].id);
  else refresh();
}
